//! Experiment runner for the `nlflow` solver: configuration, presets and
//! acceptance checks.

pub mod checks;
pub mod config;
pub mod presets;

pub use checks::{Check, Status};
pub use config::{ExperimentConfig, Overrides, Preset};
pub use presets::{run, Log, RunReport};
