//! Staged, reproducible neuron-alignment experiments.
//!
//! A run directory holds every artifact of one experiment (model, watermark
//! record, codebook, trigger sets, attacked copies, per-trial outcomes) plus a
//! manifest of their SHA-256 hashes. Stages can be run one at a time from the
//! `naf` binary or all at once with [`run_pipeline`].

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod stages;

pub use artifacts::RunDir;
pub use config::{AttackConfig, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use pipeline::run_pipeline;
pub use report::{report_stage, validate_report_json, RunReport};
