//! Thin-film optical inverse design: transfer-matrix simulation, dataset
//! generation, forward/tandem neural networks and a genetic-algorithm
//! baseline.

pub mod dataset;
pub mod error;
pub mod evolve;
pub mod materials;
pub mod models;
pub mod neural;
pub mod optics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
