//! Batch front end for `polgeo`: JSON experiment configs in, JSONL traces,
//! JSON summaries and CSV grids out.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, Experiment, ExperimentConfig};
pub use report::execute;
pub use run::{run_experiment, Failure, FailureKind, Outcome};
