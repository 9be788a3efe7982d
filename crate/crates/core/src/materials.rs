//! Tabulated complex refractive indices.
//!
//! Tables are read from a small CSV dialect (`wl,n[,k]`, wavelength in nm)
//! and interpolated piecewise-linearly. Queries outside the tabulated range
//! are rejected rather than extrapolated.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SIO2_CSV: &str = include_str!("../data/sio2.csv");
const TIO2_CSV: &str = include_str!("../data/tio2.csv");
const MANIFEST_TOML: &str = include_str!("../data/materials.toml");

/// Range covered by the built-in air table.
const AIR_RANGE_NM: (f64, f64) = (100.0, 10_000.0);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaterialId {
    SiO2,
    TiO2,
    Air,
    Custom(String),
}

impl fmt::Display for MaterialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaterialId::SiO2 => f.write_str("SiO2"),
            MaterialId::TiO2 => f.write_str("TiO2"),
            MaterialId::Air => f.write_str("Air"),
            MaterialId::Custom(name) => f.write_str(name),
        }
    }
}

impl FromStr for MaterialId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "SiO2" => MaterialId::SiO2,
            "TiO2" => MaterialId::TiO2,
            "Air" => MaterialId::Air,
            "" => return Err(Error::UnknownMaterial(String::new())),
            other => MaterialId::Custom(other.to_string()),
        })
    }
}

/// Wavelength-dependent complex refractive index `n + i k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    material: MaterialId,
    wavelengths_nm: Vec<f64>,
    n: Vec<f64>,
    k: Vec<f64>,
}

impl DispersionTable {
    pub fn new(material: MaterialId, wavelengths_nm: Vec<f64>, n: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.len() < 2 {
            return Err(Error::Validation(format!(
                "{material}: need at least 2 tabulated points, got {}",
                wavelengths_nm.len()
            )));
        }
        if n.len() != wavelengths_nm.len() || k.len() != wavelengths_nm.len() {
            return Err(Error::Validation(format!("{material}: column lengths differ")));
        }
        for (i, w) in wavelengths_nm.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Validation(format!(
                    "{material}: wavelengths not strictly increasing at row {} ({} -> {})",
                    i + 2,
                    w[0],
                    w[1]
                )));
            }
        }
        if let Some(bad) = n.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("{material}: refractive index must be positive, got {bad}")));
        }
        if let Some(bad) = k.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("{material}: extinction coefficient must be >= 0, got {bad}")));
        }
        Ok(Self { material, wavelengths_nm, n, k })
    }

    /// A wavelength-independent table, e.g. the ambient medium.
    pub fn constant(material: MaterialId, n: f64, min_nm: f64, max_nm: f64) -> Result<Self> {
        Self::new(material, vec![min_nm, max_nm], vec![n, n], vec![0.0, 0.0])
    }

    pub fn air() -> Self {
        Self::constant(MaterialId::Air, 1.0, AIR_RANGE_NM.0, AIR_RANGE_NM.1).expect("air table is valid")
    }

    pub fn material(&self) -> &MaterialId {
        &self.material
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn range_nm(&self) -> (f64, f64) {
        (self.wavelengths_nm[0], *self.wavelengths_nm.last().unwrap())
    }

    /// Complex index at `wavelength_nm`, interpolating `n` and `k` linearly.
    pub fn index_at(&self, wavelength_nm: f64) -> Result<Complex64> {
        let (lo, hi) = self.range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::OutOfRange {
                material: self.material.to_string(),
                wavelength_nm,
                min_nm: lo,
                max_nm: hi,
            });
        }
        let wl = &self.wavelengths_nm;
        // first index with wl[i] >= wavelength
        let upper = wl.partition_point(|&w| w < wavelength_nm);
        if wl[upper] == wavelength_nm {
            return Ok(Complex64::new(self.n[upper], self.k[upper]));
        }
        let lower = upper - 1;
        let frac = (wavelength_nm - wl[lower]) / (wl[upper] - wl[lower]);
        let lerp = |v: &[f64]| v[lower] + frac * (v[upper] - v[lower]);
        Ok(Complex64::new(lerp(&self.n), lerp(&self.k)))
    }
}

/// Parses the `wl,n[,k]` dispersion CSV. A missing `k` column means `k = 0`.
pub fn load_dispersion<R: Read>(material: MaterialId, source: R) -> Result<DispersionTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_k = match names.as_slice() {
        ["wl", "n"] => false,
        ["wl", "n", "k"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `wl,n` or `wl,n,k`, found `{}`", names.join(",")),
            })
        }
    };

    let (mut wl, mut n, mut k) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let expected = if has_k { 3 } else { 2 };
        if record.len() != expected {
            return Err(Error::Parse { line, message: format!("expected {expected} fields, got {}", record.len()) });
        }
        let field = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("column {}: `{}`: {e}", names[i], &record[i]),
            })
        };
        wl.push(field(0)?);
        n.push(field(1)?);
        k.push(if has_k { field(2)? } else { 0.0 });
    }
    DispersionTable::new(material, wl, n, k)
}

#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub source: String,
    pub version: u32,
    pub sha256: String,
}

#[derive(Debug, Clone, Deserialize)]
struct MaterialsManifest {
    material: Vec<ManifestEntry>,
}

/// Manifest of the dispersion tables compiled into the crate.
pub fn shipped_manifest() -> Vec<ManifestEntry> {
    toml::from_str::<MaterialsManifest>(MANIFEST_TOML)
        .expect("shipped materials manifest parses")
        .material
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Set of dispersion tables keyed by material.
#[derive(Debug, Clone)]
pub struct MaterialLibrary {
    tables: BTreeMap<MaterialId, DispersionTable>,
}

impl MaterialLibrary {
    pub fn empty() -> Self {
        let mut tables = BTreeMap::new();
        tables.insert(MaterialId::Air, DispersionTable::air());
        Self { tables }
    }

    /// SiO2, TiO2 and air, with the shipped tables verified against their
    /// manifest hashes.
    pub fn shipped() -> Result<Self> {
        let mut lib = Self::empty();
        for entry in shipped_manifest() {
            let bytes = match entry.file.as_str() {
                "sio2.csv" => SIO2_CSV,
                "tio2.csv" => TIO2_CSV,
                other => return Err(Error::Validation(format!("manifest names unknown file {other}"))),
            };
            let actual = sha256_hex(bytes.as_bytes());
            if actual != entry.sha256 {
                return Err(Error::Validation(format!(
                    "{}: content hash {actual} does not match manifest {}",
                    entry.file, entry.sha256
                )));
            }
            let id: MaterialId = entry.id.parse()?;
            lib.insert(load_dispersion(id, bytes.as_bytes())?);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, table: DispersionTable) {
        self.tables.insert(table.material().clone(), table);
    }

    pub fn get(&self, id: &MaterialId) -> Result<&DispersionTable> {
        self.tables.get(id).ok_or_else(|| Error::UnknownMaterial(id.to_string()))
    }

    pub fn index_at(&self, id: &MaterialId, wavelength_nm: f64) -> Result<Complex64> {
        self.get(id)?.index_at(wavelength_nm)
    }

    /// Combined hash of the shipped tables, recorded in dataset manifests.
    pub fn shipped_hash() -> String {
        let mut hasher = Sha256::new();
        for entry in shipped_manifest() {
            hasher.update(entry.id.as_bytes());
            hasher.update(entry.sha256.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}
