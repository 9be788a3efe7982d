//! Forward (thicknesses → spectrum) and inverse (spectrum → thicknesses)
//! architectures, and their tandem composition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, LayerSpec, Mode, Network, Tensor};
use crate::optics::GRID_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mlp,
    Cnn,
    Lstm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Mlp, Algorithm::Cnn, Algorithm::Lstm];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Mlp => "MLP",
            Algorithm::Cnn => "CNN",
            Algorithm::Lstm => "LSTM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Mlp => "mlp",
            Algorithm::Cnn => "cnn",
            Algorithm::Lstm => "lstm",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Algorithm::Mlp),
            "cnn" => Ok(Algorithm::Cnn),
            "lstm" => Ok(Algorithm::Lstm),
            _ => Err(Error::Validation(format!("unknown algorithm {s:?} (expected mlp, cnn or lstm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Fnn,
    Inn,
}

/// Declared layer stack for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub role: Role,
    pub algorithm: Algorithm,
    pub layer_count: usize,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn build(&self, init_seed: u64) -> Result<Network> {
        Network::new(self.input_shape.clone(), self.layers.clone(), init_seed)
    }

    /// Widths of the dense layers, in order.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect()
    }

    pub fn conv_layers(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv1d { filters, kernel_size, .. } => Some((*filters, *kernel_size)),
                _ => None,
            })
            .collect()
    }

    pub fn lstm_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Lstm { hidden, .. } => Some(*hidden),
                _ => None,
            })
            .collect()
    }
}

const FNN_DENSE: [usize; 4] = [100, 200, 300, 400];
const FNN_CONV: [usize; 3] = [10, 20, 40];
const FNN_CONV_KERNEL: usize = 3;
const FNN_LSTM: [usize; 3] = [20, 100, 200];
const INN_DENSE_MLP: [usize; 4] = [800, 400, 200, 100];
const INN_CONV: [usize; 3] = [30, 60, 120];
const INN_CONV_KERNEL: usize = 11;
const INN_DENSE_CNN: [usize; 4] = [2000, 1000, 500, 100];
const INN_LSTM: [usize; 3] = [100, 50, 30];
const POOL: usize = 2;

fn dense_tower(layers: &mut Vec<LayerSpec>, widths: &[usize], hidden: Activation, out: usize) {
    for &w in widths {
        layers.push(LayerSpec::dense(w));
        layers.push(LayerSpec::act(hidden));
    }
    layers.push(LayerSpec::dense(out));
    layers.push(LayerSpec::act(Activation::Sigmoid));
}

/// Stacked LSTMs over a scalar sequence; the last one emits only its final
/// state, with a logistic cell nonlinearity so outputs land in (0, 1).
fn lstm_tower(widths: &[usize], out: usize) -> Vec<LayerSpec> {
    let mut layers: Vec<LayerSpec> = widths.iter().map(|&h| LayerSpec::lstm(h, true)).collect();
    layers.push(LayerSpec::Lstm { hidden: out, return_sequences: false, cell_activation: Activation::Sigmoid });
    layers
}

fn check_layer_count(layer_count: usize) -> Result<()> {
    // Three pool-by-2 stages in the forward CNN need at least 8 positions.
    if layer_count < 8 {
        return Err(Error::Validation(format!("layer count must be at least 8, got {layer_count}")));
    }
    Ok(())
}

pub fn fnn_spec(algorithm: Algorithm, layer_count: usize) -> Result<ArchitectureSpec> {
    check_layer_count(layer_count)?;
    let mut layers = Vec::new();
    match algorithm {
        Algorithm::Mlp => dense_tower(&mut layers, &FNN_DENSE, Activation::LeakyRelu, GRID_LEN),
        Algorithm::Cnn => {
            for &f in &FNN_CONV {
                layers.push(LayerSpec::conv_same(f, FNN_CONV_KERNEL));
                layers.push(LayerSpec::act(Activation::Relu));
                layers.push(LayerSpec::MaxPool1d { size: POOL });
            }
            layers.push(LayerSpec::Flatten);
            dense_tower(&mut layers, &FNN_DENSE, Activation::Relu, GRID_LEN);
        }
        Algorithm::Lstm => layers = lstm_tower(&FNN_LSTM, GRID_LEN),
    }
    Ok(ArchitectureSpec { role: Role::Fnn, algorithm, layer_count, input_shape: vec![layer_count], layers })
}

pub fn inn_spec(algorithm: Algorithm, layer_count: usize) -> Result<ArchitectureSpec> {
    check_layer_count(layer_count)?;
    let mut layers = Vec::new();
    match algorithm {
        Algorithm::Mlp => dense_tower(&mut layers, &INN_DENSE_MLP, Activation::LeakyRelu, layer_count),
        Algorithm::Cnn => {
            for &f in &INN_CONV {
                layers.push(LayerSpec::conv_same(f, INN_CONV_KERNEL));
                layers.push(LayerSpec::act(Activation::Relu));
                layers.push(LayerSpec::batch_norm());
                layers.push(LayerSpec::MaxPool1d { size: POOL });
            }
            layers.push(LayerSpec::Flatten);
            dense_tower(&mut layers, &INN_DENSE_CNN, Activation::Relu, layer_count);
        }
        Algorithm::Lstm => layers = lstm_tower(&INN_LSTM, layer_count),
    }
    Ok(ArchitectureSpec { role: Role::Inn, algorithm, layer_count, input_shape: vec![GRID_LEN], layers })
}

pub fn build_fnn(algorithm: Algorithm, layer_count: usize, init_seed: u64) -> Result<Network> {
    fnn_spec(algorithm, layer_count)?.build(init_seed)
}

pub fn build_inn(algorithm: Algorithm, layer_count: usize, init_seed: u64) -> Result<Network> {
    inn_spec(algorithm, layer_count)?.build(init_seed)
}

/// All nine (inverse, forward) algorithm pairings.
pub fn tandem_pairings() -> Vec<(Algorithm, Algorithm)> {
    Algorithm::ALL.iter().flat_map(|&i| Algorithm::ALL.iter().map(move |&f| (i, f))).collect()
}

/// An inverse network feeding a frozen forward network.
#[derive(Debug, Clone)]
pub struct TandemModel {
    pub inn: Network,
    pub fnn: Network,
}

/// Output of a tandem forward pass.
pub struct TandemOutput {
    /// Normalized thicknesses, `[batch, layer_count]`.
    pub thicknesses: Tensor,
    /// Reconstructed spectra, `[batch, 401]`.
    pub spectra: Tensor,
}

pub fn compose_tandem(inn: Network, mut fnn: Network) -> Result<TandemModel> {
    if inn.output_width() != fnn.input_width() {
        return Err(Error::Validation(format!(
            "width mismatch: inverse network emits {} thicknesses but forward network takes {}",
            inn.output_width(),
            fnn.input_width()
        )));
    }
    if inn.input_width() != fnn.output_width() {
        return Err(Error::Validation(format!(
            "width mismatch: inverse network reads {} spectrum points but forward network emits {}",
            inn.input_width(),
            fnn.output_width()
        )));
    }
    fnn.freeze();
    Ok(TandemModel { inn, fnn })
}

impl TandemModel {
    pub fn layer_count(&self) -> usize {
        self.inn.output_width()
    }

    pub fn check_frozen(&self) -> Result<()> {
        if self.fnn.is_frozen() {
            Ok(())
        } else {
            Err(Error::Contract("forward network inside a tandem must be frozen".into()))
        }
    }

    /// The forward network always runs in eval mode; `mode` applies to the
    /// inverse network only.
    pub fn forward(&mut self, spectra: &Tensor, mode: Mode) -> Result<TandemOutput> {
        let thicknesses = self.inn.forward(spectra, mode)?;
        let spectra = self.fnn.forward(&thicknesses, Mode::Eval)?;
        Ok(TandemOutput { thicknesses, spectra })
    }

    /// Backpropagates a gradient on the reconstructed spectra through the
    /// frozen forward network into the inverse network.
    pub fn backward(&mut self, grad_spectra: &Tensor) -> Result<()> {
        let g = self.fnn.backward(grad_spectra)?;
        self.inn.backward(&g)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_parsing() {
        assert_eq!("MLP".parse::<Algorithm>().unwrap(), Algorithm::Mlp);
        assert_eq!("lstm".parse::<Algorithm>().unwrap(), Algorithm::Lstm);
        assert!("rnn".parse::<Algorithm>().is_err());
        assert_eq!(Algorithm::Cnn.to_string(), "cnn");
    }

    #[test]
    fn nine_pairings() {
        let p = tandem_pairings();
        assert_eq!(p.len(), 9);
        let set: std::collections::BTreeSet<_> = p.into_iter().collect();
        assert_eq!(set.len(), 9);
    }

    #[test]
    fn small_layer_counts_rejected() {
        assert!(fnn_spec(Algorithm::Mlp, 7).is_err());
        assert!(inn_spec(Algorithm::Cnn, 0).is_err());
    }

    #[test]
    fn compose_rejects_mismatched_widths() {
        let inn = build_inn(Algorithm::Mlp, 8, 0).unwrap();
        let fnn = build_fnn(Algorithm::Mlp, 12, 0).unwrap();
        let err = compose_tandem(inn, fnn).unwrap_err().to_string();
        assert!(err.contains('8') && err.contains("12"), "{err}");
    }
}
