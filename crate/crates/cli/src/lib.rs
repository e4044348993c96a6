//! Command-line front end for `dsmc-core`: experiment presets, JSON
//! configuration, verification sweeps and CSV output.

pub mod app;
pub mod document;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod summary;

pub use document::{parse_config, read_config, ExperimentSpec};
pub use error::CliError;
pub use experiment::{run_experiment, ResultRow};
pub use presets::Preset;
