//! Binary checkpoint container.
//!
//! ```text
//! b"TNNCKPT1"
//! u64 LE   manifest length
//! [u8]     JSON manifest (architecture, init scheme, freeze flags, metadata)
//! per parameter, in manifest order:
//!   u32 LE name length, name bytes, u32 LE rank, rank x u64 LE dims,
//!   prod(dims) x f32 LE values
//! [u8; 32] SHA-256 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{LayerSpec, Network, INIT_SCHEME};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TNNCKPT1";
const HASH_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    networks: Vec<NetworkManifest>,
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkManifest {
    name: String,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    init_scheme: String,
    init_seed: u64,
    params: Vec<ParamManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamManifest {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    frozen: bool,
}

/// Named networks plus free-form string metadata.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub networks: Vec<(String, Network)>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn single(name: &str, network: Network) -> Self {
        Self { networks: vec![(name.to_string(), network)], metadata: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn network(&self, name: &str) -> Result<&Network> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
            .ok_or_else(|| Error::Checkpoint(format!("no network named {name:?}")))
    }

    pub fn take(self, name: &str) -> Result<Network> {
        self.networks
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
            .ok_or_else(|| Error::Checkpoint(format!("no network named {name:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NetworkManifest {
                    name: name.clone(),
                    input_shape: net.input_shape().to_vec(),
                    output_shape: net.output_shape().to_vec(),
                    layers: net.specs().to_vec(),
                    init_scheme: INIT_SCHEME.to_string(),
                    init_seed: net.init_seed(),
                    params: net
                        .named_params()
                        .into_iter()
                        .map(|(name, p)| ParamManifest {
                            name,
                            shape: p.value.shape().to_vec(),
                            trainable: p.trainable,
                            frozen: p.is_frozen(),
                        })
                        .collect(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let text = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(&text);
        for (_, net) in &self.networks {
            for (name, p) in net.named_params() {
                out.extend_from_slice(&(name.len() as u32).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
                for &d in p.value.shape() {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for &v in p.value.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + HASH_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic or truncated)".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - HASH_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(Error::Checkpoint("content hash mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let manifest_len = r.u64()? as usize;
        let manifest: Manifest =
            serde_json::from_slice(r.take(manifest_len)?).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;

        let mut networks = Vec::with_capacity(manifest.networks.len());
        for nm in manifest.networks {
            let mut net = Network::new(nm.input_shape.clone(), nm.layers.clone(), nm.init_seed)?;
            if net.output_shape() != nm.output_shape.as_slice() {
                return Err(Error::Checkpoint(format!("{}: manifest output shape disagrees", nm.name)));
            }
            let expected: Vec<(String, Vec<usize>)> =
                net.named_params().into_iter().map(|(n, p)| (n, p.value.shape().to_vec())).collect();
            if expected.len() != nm.params.len() {
                return Err(Error::Checkpoint(format!("{}: parameter count disagrees", nm.name)));
            }
            let mut values = Vec::with_capacity(expected.len());
            for ((want_name, want_shape), pm) in expected.iter().zip(&nm.params) {
                let name_len = r.u32()? as usize;
                let name = std::str::from_utf8(r.take(name_len)?)
                    .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?;
                let rank = r.u32()? as usize;
                let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                if name != want_name || &shape != want_shape || pm.name != *want_name || pm.shape != shape {
                    return Err(Error::Checkpoint(format!(
                        "{}: parameter {name} {shape:?} does not match architecture ({want_name} {want_shape:?})",
                        nm.name
                    )));
                }
                let n: usize = shape.iter().product();
                let raw = r.take(n * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                    .collect();
                values.push(Tensor::new(shape, data)?);
            }
            net.restore(&values)?;
            for (p, pm) in net.params_mut().zip(&nm.params) {
                if pm.frozen {
                    p.freeze();
                }
            }
            networks.push((nm.name, net));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(Self { networks, metadata: manifest.metadata })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        Ok(hex::encode(&bytes[bytes.len() - HASH_LEN..]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Hex content hash stored in a checkpoint's trailer.
pub fn checkpoint_hash(bytes: &[u8]) -> Result<String> {
    if bytes.len() < HASH_LEN {
        return Err(Error::Checkpoint("truncated".into()));
    }
    Ok(hex::encode(&bytes[bytes.len() - HASH_LEN..]))
}

/// Rounds every parameter to the precision it will have after a
/// save/load round trip, so in-memory and reloaded networks agree exactly.
pub fn round_to_storage(network: &mut Network) {
    for p in network.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, LayerSpec, Mode};

    fn sample_net() -> Network {
        Network::new(
            vec![12],
            vec![
                LayerSpec::conv_same(3, 3),
                LayerSpec::batch_norm(),
                LayerSpec::MaxPool1d { size: 2 },
                LayerSpec::lstm(4, false),
                LayerSpec::dense(2),
                LayerSpec::act(Activation::Sigmoid),
            ],
            9,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_stored_values_and_flags() {
        let mut fnn = sample_net();
        round_to_storage(&mut fnn);
        let mut frozen = fnn.clone();
        frozen.freeze();
        let ck = Checkpoint { networks: vec![("inn".into(), fnn.clone()), ("fnn".into(), frozen)], ..Default::default() }
            .with_meta("algorithm", "cnn");
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.metadata["algorithm"], "cnn");
        let inn = back.network("inn").unwrap();
        assert_eq!(inn.parameter_hash(), fnn.parameter_hash());
        assert!(!inn.is_frozen());
        assert!(back.network("fnn").unwrap().is_frozen());
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let x = Tensor::new(vec![2, 12], (0..24).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap();
        let mut a = fnn.clone();
        let mut b = back.take("inn").unwrap();
        assert_eq!(a.forward(&x, Mode::Eval).unwrap(), b.forward(&x, Mode::Eval).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = Checkpoint::single("fnn", sample_net()).to_bytes().unwrap();
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
    }
}
