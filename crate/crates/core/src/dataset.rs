//! Deterministic (thickness sequence, spectrum) datasets.
//!
//! Thickness `j` of sample `i` is drawn from the admissible grid with the
//! Philox counter `(seed, THICKNESS, i, j)`, so a sample depends only on its
//! own index. Splits are a seeded permutation cut 60/20/20.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{sha256_hex, MaterialLibrary};
use crate::optics::{wavelength_grid, LayerStack, Simulator, Spectrum, GRID_LEN};
use crate::rng::{domain, permutation, CounterRng};

pub const GENERATOR_NAME: &str = "philox4x32-10";

/// Admissible layer thicknesses `min, min + step, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessGrid {
    pub min_nm: f64,
    pub max_nm: f64,
    pub step_nm: f64,
}

impl Default for ThicknessGrid {
    fn default() -> Self {
        Self { min_nm: 30.0, max_nm: 70.0, step_nm: 1.0 }
    }
}

impl ThicknessGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_nm > 0.0) || !(self.max_nm > self.min_nm) || self.min_nm < 0.0 {
            return Err(Error::Validation(format!("invalid thickness grid {self:?}")));
        }
        let steps = (self.max_nm - self.min_nm) / self.step_nm;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "thickness range {}..{} is not a whole number of {} nm steps",
                self.min_nm, self.max_nm, self.step_nm
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max_nm - self.min_nm) / self.step_nm).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, index: usize) -> f64 {
        self.min_nm + index as f64 * self.step_nm
    }

    /// Index of the nearest grid point, clamped to the range.
    pub fn nearest_index(&self, thickness_nm: f64) -> usize {
        let raw = ((thickness_nm - self.min_nm) / self.step_nm).round();
        raw.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    pub fn snap(&self, thickness_nm: f64) -> f64 {
        self.value(self.nearest_index(thickness_nm))
    }

    pub fn contains(&self, thickness_nm: f64) -> bool {
        thickness_nm >= self.min_nm && thickness_nm <= self.max_nm
    }

    /// `(d - min) / (max - min)`; thicknesses outside the range are rejected.
    pub fn normalize(&self, thicknesses_nm: &[f64]) -> Result<Vec<f64>> {
        let span = self.max_nm - self.min_nm;
        thicknesses_nm
            .iter()
            .map(|&d| {
                if self.contains(d) {
                    Ok((d - self.min_nm) / span)
                } else {
                    Err(Error::Validation(format!(
                        "thickness {d} nm outside [{}, {}] nm",
                        self.min_nm, self.max_nm
                    )))
                }
            })
            .collect()
    }

    /// Inverse of [`normalize`](Self::normalize). Inputs are clamped to
    /// `[0, 1]`; with `snap` the result is moved to the nearest grid point.
    pub fn denormalize(&self, normalized: &[f64], snap: bool) -> Vec<f64> {
        let span = self.max_nm - self.min_nm;
        normalized
            .iter()
            .map(|&x| {
                let d = self.min_nm + x.clamp(0.0, 1.0) * span;
                if snap {
                    self.snap(d)
                } else {
                    d
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub layer_count: usize,
    pub sample_count: usize,
    pub thickness_min_nm: f64,
    pub thickness_max_nm: f64,
    pub thickness_step_nm: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            layer_count: 20,
            sample_count: 100_000,
            thickness_min_nm: 30.0,
            thickness_max_nm: 70.0,
            thickness_step_nm: 1.0,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn new(layer_count: usize, sample_count: usize, seed: u64) -> Self {
        Self { layer_count, sample_count, seed, ..Self::default() }
    }

    pub fn grid(&self) -> ThicknessGrid {
        ThicknessGrid {
            min_nm: self.thickness_min_nm,
            max_nm: self.thickness_max_nm,
            step_nm: self.thickness_step_nm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::Validation("layer_count must be >= 1".into()));
        }
        if self.sample_count == 0 {
            return Err(Error::Validation("sample_count must be >= 1".into()));
        }
        self.grid().validate()
    }
}

/// The `draw_index`-th random stack: grid-uniform thicknesses, alternating
/// SiO2/TiO2 starting with SiO2, air on both sides.
pub fn random_stack(config: &GenConfig, draw_index: u64) -> LayerStack {
    LayerStack::alternating(random_thicknesses(config, draw_index)).expect("grid thicknesses are valid")
}

pub fn random_thicknesses(config: &GenConfig, draw_index: u64) -> Vec<f64> {
    let grid = config.grid();
    let rng = CounterRng::new(config.seed);
    (0..config.layer_count)
        .map(|layer| grid.value(rng.below_at(domain::THICKNESS, draw_index, layer as u32, grid.len() as u64) as usize))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub thicknesses_nm: Vec<f64>,
    pub normalized: Vec<f64>,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded permutation of `0..n` cut into floor(60%), floor(20%) and the rest.
    pub fn seeded(n: usize, seed: u64) -> Self {
        let perm = permutation(seed, domain::SPLIT, 0, n);
        let n_train = n * 6 / 10;
        let n_val = n * 2 / 10;
        Self {
            train: perm[..n_train].to_vec(),
            val: perm[n_train..n_train + n_val].to_vec(),
            test: perm[n_train + n_val..].to_vec(),
        }
    }

    pub fn part(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub config: GenConfig,
    pub split: Split,
    pub material_manifest_hash: String,
}

impl Dataset {
    pub fn layer_count(&self) -> usize {
        self.config.layer_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> ThicknessGrid {
        self.config.grid()
    }

    /// Row-major `[indices.len(), layer_count]` normalized thicknesses.
    pub fn inputs(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().flat_map(|&i| self.samples[i].normalized.iter().copied()).collect()
    }

    /// Row-major `[indices.len(), 401]` spectra.
    pub fn spectra(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().flat_map(|&i| self.samples[i].spectrum.values().iter().copied()).collect()
    }

    /// Keeps the first `n` samples and recomputes the split for that size.
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let config = GenConfig { sample_count: n, ..self.config.clone() };
        Dataset {
            samples: self.samples[..n].to_vec(),
            split: Split::seeded(n, config.seed),
            config,
            material_manifest_hash: self.material_manifest_hash.clone(),
        }
    }
}

pub fn generate_dataset(config: &GenConfig, simulator: &Simulator) -> Result<Dataset> {
    config.validate()?;
    let grid = config.grid();
    let samples = (0..config.sample_count as u64)
        .into_par_iter()
        .map(|i| -> Result<Sample> {
            let stack = random_stack(config, i);
            let spectrum = simulator.spectrum(&stack)?;
            let normalized = grid.normalize(&stack.thicknesses_nm)?;
            Ok(Sample { thicknesses_nm: stack.thicknesses_nm, normalized, spectrum })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        config: config.clone(),
        split: Split::seeded(config.sample_count, config.seed),
        material_manifest_hash: MaterialLibrary::shipped_hash(),
    })
}

/// Formats `v` with 9 significant decimal digits, fixed notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn header(layer_count: usize) -> Vec<String> {
    (1..=layer_count)
        .map(|j| format!("d_{j}"))
        .chain(wavelength_grid().map(|wl| format!("T_{wl}")))
        .collect()
}

pub fn to_csv_bytes(dataset: &Dataset) -> Vec<u8> {
    let mut out = String::with_capacity(dataset.len() * (GRID_LEN * 12 + dataset.layer_count() * 4));
    out.push_str(&header(dataset.layer_count()).join(","));
    out.push('\n');
    for sample in &dataset.samples {
        let mut first = true;
        for d in &sample.thicknesses_nm {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{d}").unwrap();
        }
        for t in sample.spectrum.values() {
            out.push(',');
            out.push_str(&format_sig9(*t));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Sidecar metadata written next to every dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub generator: String,
    pub material_tables_sha256: String,
    pub content_sha256: String,
    pub rows: usize,
    pub columns: usize,
    pub gen_config: GenConfig,
}

impl DatasetManifest {
    pub fn for_csv(dataset: &Dataset, csv: &[u8]) -> Self {
        Self {
            generator: GENERATOR_NAME.to_string(),
            material_tables_sha256: dataset.material_manifest_hash.clone(),
            content_sha256: sha256_hex(csv),
            rows: dataset.len(),
            columns: dataset.layer_count() + GRID_LEN,
            gen_config: dataset.config.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::schema(format!("dataset manifest: {e}")))
    }
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

/// Writes `<path>` and `<path>.manifest.toml`.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<DatasetManifest> {
    let csv = to_csv_bytes(dataset);
    let manifest = DatasetManifest::for_csv(dataset, &csv);
    fs::write(path, &csv)?;
    fs::write(manifest_path(path), manifest.to_toml())?;
    Ok(manifest)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_text = fs::read_to_string(manifest_path(path)).map_err(|e| {
        Error::schema(format!("cannot read manifest {}: {e}", manifest_path(path).display()))
    })?;
    let manifest = DatasetManifest::from_toml(&manifest_text)?;
    read_dataset(fs::File::open(path)?, &manifest)
}

/// Reads a dataset CSV and checks it against its manifest.
pub fn read_dataset<R: Read>(mut source: R, manifest: &DatasetManifest) -> Result<Dataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let config = manifest.gen_config.clone();
    config.validate()?;
    let samples = parse_samples(&bytes, config.layer_count, &config.grid())?;
    if samples.len() != manifest.rows || samples.len() != config.sample_count {
        return Err(Error::schema(format!(
            "dataset has {} rows but manifest records {}",
            samples.len(),
            manifest.rows
        )));
    }
    let actual = sha256_hex(&bytes);
    if actual != manifest.content_sha256 {
        return Err(Error::schema(format!(
            "content hash {actual} does not match manifest {}",
            manifest.content_sha256
        )));
    }
    Ok(Dataset {
        samples,
        split: Split::seeded(config.sample_count, config.seed),
        config,
        material_manifest_hash: manifest.material_tables_sha256.clone(),
    })
}

/// Parses the CSV body without a manifest.
pub fn parse_samples(bytes: &[u8], layer_count: usize, grid: &ThicknessGrid) -> Result<Vec<Sample>> {
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        return Err(Error::schema("dataset file is truncated (no trailing newline)"));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let expected = header(layer_count);
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| Error::schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != expected {
        return Err(Error::schema(format!(
            "expected {} columns (`d_1..d_{layer_count}, T_400..T_800`), found {}",
            expected.len(),
            found.len()
        )));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != expected.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", expected.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{f}`: {e}") }))
            .collect::<Result<Vec<_>>>()?;
        let thicknesses_nm = values[..layer_count].to_vec();
        let normalized = grid.normalize(&thicknesses_nm)?;
        let spectrum = Spectrum::new(values[layer_count..].to_vec())?;
        samples.push(Sample { thicknesses_nm, normalized, spectrum });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_41_values() {
        let grid = ThicknessGrid::default();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid.value(0), 30.0);
        assert_eq!(grid.value(40), 70.0);
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let grid = ThicknessGrid::default();
        assert_eq!(grid.normalize(&[30.0, 70.0, 50.0]).unwrap(), vec![0.0, 1.0, 0.5]);
        assert!(grid.normalize(&[29.0]).is_err());
        assert!(grid.normalize(&[70.5]).is_err());
    }

    #[test]
    fn denormalize_snaps_to_grid() {
        let grid = ThicknessGrid::default();
        assert_eq!(grid.denormalize(&[0.512], true), vec![50.0]);
        assert!((grid.denormalize(&[0.512], false)[0] - 50.48).abs() < 1e-12);
        assert_eq!(grid.denormalize(&[-0.3, 1.7], true), vec![30.0, 70.0]);
    }

    #[test]
    fn non_integral_grid_rejected() {
        let grid = ThicknessGrid { min_nm: 30.0, max_nm: 70.0, step_nm: 3.0 };
        assert!(grid.validate().is_err());
        assert!(GenConfig { layer_count: 0, ..GenConfig::default() }.validate().is_err());
    }

    #[test]
    fn random_stack_contract() {
        let config = GenConfig::new(20, 1, 42);
        let stack = random_stack(&config, 3);
        assert_eq!(stack.len(), 20);
        for d in &stack.thicknesses_nm {
            assert!((30.0..=70.0).contains(d));
            assert_eq!(d.fract(), 0.0);
        }
        assert_eq!(stack, random_stack(&config, 3));
        assert_ne!(stack, random_stack(&config, 4));
        assert_eq!(stack.materials[0], crate::materials::MaterialId::SiO2);
        assert_eq!(stack.materials[1], crate::materials::MaterialId::TiO2);
    }

    #[test]
    fn split_sizes() {
        let s = Split::seeded(100, 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
        let s = Split::seeded(100_000, 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60_000, 20_000, 20_000));
        let s = Split::seeded(7, 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (4, 1, 2));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.870288123456), "0.870288123");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(0.0123456789012), "0.0123456789");
        assert_eq!(format_sig9(0.0), "0");
    }

    #[test]
    fn header_has_409_columns_for_eight_layers() {
        let h = header(8);
        assert_eq!(h.len(), 409);
        assert_eq!(h[0], "d_1");
        assert_eq!(h[7], "d_8");
        assert_eq!(h[8], "T_400");
        assert_eq!(h[408], "T_800");
    }

    proptest::proptest! {
        #[test]
        fn normalize_denormalize_round_trip(x in 0.0f64..=1.0) {
            let grid = ThicknessGrid::default();
            let d = grid.denormalize(&[x], false);
            let back = grid.normalize(&d).unwrap()[0];
            proptest::prop_assert!((back - x).abs() < 1e-12);
        }

        #[test]
        fn grid_round_trip_is_exact(i in 0usize..41) {
            let grid = ThicknessGrid::default();
            let d = grid.value(i);
            let n = grid.normalize(&[d]).unwrap();
            proptest::prop_assert_eq!(grid.denormalize(&n, true)[0], d);
        }

        #[test]
        fn splits_partition_the_index_set(n in 1usize..500, seed in 0u64..1000) {
            let s = Split::seeded(n, seed);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
