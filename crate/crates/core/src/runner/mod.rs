//! Configuration, presets, on-disk formats and the orchestration behind the CLI.

mod config;
mod output;
mod preset;
mod snapshot;

pub use config::{parse_config, RunConfig, CONFIG_KEYS};
pub use output::{estimate_snapshot, execute, rate_study_dirs, RunOptions, RunOutcome};
pub use preset::{evaluate_preset, Preset};
pub use snapshot::{read_snapshot, write_snapshot, write_vtk};
