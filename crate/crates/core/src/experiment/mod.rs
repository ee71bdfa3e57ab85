//! Config-driven batches that write CSV tables and SVG figures.

pub mod config;
pub mod output;
pub mod plot;
pub mod run;

pub use config::{apply_override, ExperimentConfig, ModeKind, PRESETS};
pub use run::{run_comparison, run_experiment, run_modes, ModeReport, RunReport};
