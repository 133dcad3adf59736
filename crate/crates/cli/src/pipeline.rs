//! The full experiment in one call: every stage in order on a fresh run
//! directory.

use std::path::Path;

use crate::artifacts::RunDir;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::report::{report_stage, RunReport};
use crate::stages::{align_stage, attack_stage, encode_stage, forge_stage, train_stage};

pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunReport> {
    let run = RunDir::create(out)?;
    train_stage(cfg, &run)?;
    encode_stage(&run)?;
    forge_stage(&run, &cfg.forge.modes)?;
    attack_stage(&run, None, None)?;
    align_stage(&run, None, false)?;
    report_stage(&run)
}
