//! Experiment runner for the `mfgen-core` generalization benchmarks.
//!
//! An experiment is one TOML file naming the experiment kind and the blocks it needs:
//!
//! ```toml
//! experiment = "gaussian-oracle"
//! [population]
//! distribution = "gaussian"
//! sd = 1.0
//! [sweep]
//! n = [5, 10]
//! replicates = 1000
//! seed = 1
//! ```
//!
//! Results are collected in memory and written once the experiment has finished.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

use anyhow::Result;
use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use experiments::Outcome;

/// Exit status of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violations,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Self::Ok => 0,
            Self::Violations => 2,
        }
    }
}

/// Loads, runs and writes one config; `out` replaces `output.dir` when given.
pub fn run_file(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(Outcome, Status)> {
    let cfg = ExperimentConfig::load(path)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    finish(experiments::run(&cfg, &dir, seed)?)
}

/// Runs the built-in invariant suites and writes `verify.json`.
pub fn run_verify(out: &Path) -> Result<(Outcome, Status)> {
    finish(experiments::verify_report("verify", out)?)
}

impl Outcome {
    pub fn status(&self) -> Status {
        if self.violations > 0 {
            Status::Violations
        } else {
            Status::Ok
        }
    }
}

fn finish(outcome: Outcome) -> Result<(Outcome, Status)> {
    for a in &outcome.artifacts {
        a.write()?;
    }
    let status = outcome.status();
    Ok((outcome, status))
}
