//! Experiment harness for the slow-fast wave/heat system: configuration,
//! rate studies, bound checks and CSV output.

pub mod cli;
pub mod commands;
pub mod config;
pub mod csv;
mod error;
pub mod lemmas;
pub mod rate;

pub use config::Config;
pub use error::{HarnessError, Result};
