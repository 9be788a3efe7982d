//! Command-line pipeline: dataset generation, forward and tandem training,
//! inverse design, genetic-algorithm comparison and static plots.

pub mod commands;
pub mod config;
pub mod exit;
pub mod io;
pub mod plot;

pub use commands::{run, Cli};
pub use exit::{CliError, Status};
