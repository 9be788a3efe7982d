//! Run configuration file: TOML with one table per pipeline stage.
//! Every key is optional and defaults to the reference hyperparameters;
//! unknown keys are rejected.
//!
//! ```toml
//! [data]
//! layer_count = 8
//! sample_count = 5000
//! seed = 7
//!
//! [fnn]
//! algorithm = "mlp"
//! epochs = 100
//!
//! [tnn]
//! algorithm = "mlp"
//! patience = 200
//!
//! [ga]
//! population_size = 200
//! ```

use std::path::Path;

use serde::Deserialize;
use thinfilm::dataset::GenConfig;
use thinfilm::evolve::GaConfig;
use thinfilm::models::Algorithm;
use thinfilm::training::TrainConfig;

use crate::exit::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub fnn: StageSection,
    #[serde(default)]
    pub tnn: StageSection,
    #[serde(default)]
    pub ga: GaSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub layer_count: Option<usize>,
    pub sample_count: Option<usize>,
    pub thickness_min_nm: Option<f64>,
    pub thickness_max_nm: Option<f64>,
    pub thickness_step_nm: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub algorithm: Option<Algorithm>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSection {
    pub population_size: Option<usize>,
    pub generations: Option<usize>,
    pub mutation_rate: Option<f64>,
    pub selected_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub target_mse: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn gen_config(&self) -> GenConfig {
        let d = GenConfig::default();
        let s = &self.data;
        GenConfig {
            layer_count: s.layer_count.unwrap_or(d.layer_count),
            sample_count: s.sample_count.unwrap_or(d.sample_count),
            thickness_min_nm: s.thickness_min_nm.unwrap_or(d.thickness_min_nm),
            thickness_max_nm: s.thickness_max_nm.unwrap_or(d.thickness_max_nm),
            thickness_step_nm: s.thickness_step_nm.unwrap_or(d.thickness_step_nm),
            seed: s.seed.unwrap_or(d.seed),
        }
    }

    pub fn fnn_training(&self) -> TrainConfig {
        self.fnn.apply(TrainConfig::fnn_default())
    }

    pub fn tnn_training(&self) -> TrainConfig {
        self.tnn.apply(TrainConfig::tnn_default())
    }

    pub fn ga_config(&self, layer_count: usize) -> GaConfig {
        let d = GaConfig::default();
        let s = &self.ga;
        GaConfig {
            population_size: s.population_size.unwrap_or(d.population_size),
            generations: s.generations.unwrap_or(d.generations),
            mutation_rate: s.mutation_rate.unwrap_or(d.mutation_rate),
            selected_fraction: s.selected_fraction.unwrap_or(d.selected_fraction),
            seed: s.seed.unwrap_or(d.seed),
            target_mse: s.target_mse.or(d.target_mse),
            layer_count,
            grid: d.grid,
        }
    }
}

impl StageSection {
    fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            patience: self.patience.or(base.patience),
            seed: self.seed.unwrap_or(base.seed),
            shuffle: self.shuffle.unwrap_or(base.shuffle),
        }
    }

    pub fn algorithm_or(&self, default: Algorithm) -> Algorithm {
        self.algorithm.unwrap_or(default)
    }
}
