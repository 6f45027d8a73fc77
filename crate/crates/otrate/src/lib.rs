//! Configuration, file formats and experiment orchestration on top of
//! [`otrate_core`].

pub mod config;
pub mod error;
pub mod generators;
pub mod harness;
pub mod io;

pub use config::{load_config, parse_config, ExperimentConfig, LoadedConfig};
pub use error::{HarnessError, HarnessResult};
pub use io::{emit_csv, emit_measure, load_measure};
