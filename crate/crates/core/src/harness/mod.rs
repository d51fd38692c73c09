//! Scenario configuration, seeded Monte Carlo runs, complexity accounting
//! and trace/summary files.

mod config;
mod experiment;
mod ledger;
mod output;
pub mod presets;
mod trial;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ArraySpec, BoundSpec, DetectSpec, GeometrySpec, QnMode, QnSpec, ScenarioConfig, Scheme};
pub use experiment::{run_experiment, summarize, DetectionFrame, ExperimentResult, Summary, SCHEMA_VERSION};
pub use ledger::ComplexityLedger;
pub use output::{emit_summary, emit_trace, read_summary, read_trace, summary_to_json, write_trace};
pub use presets::{preset, PRESETS};
pub use trial::{run_trial, FrameRecord, RealignmentEvent, Scenario, TrialOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("I/O error at {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// Process exit code for the CLI: 2 for configuration, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::UnknownPreset(_) => 2,
            HarnessError::Io { .. } => 3,
        }
    }
}
