use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::ledger::ComplexityLedger;
use super::trial::{Scenario, TrialOutcome};
use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// A frame at which the detector flagged a misalignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub trial: usize,
    pub frame: usize,
    pub realigned: bool,
}

/// Aggregate of all trials of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    /// Mean of `|xi_k|^2` over trials, frame 1 first.
    pub per_frame_mse: Vec<f64>,
    /// Trial-averaged bound; `null` when the scheme carries none.
    pub per_frame_bound: Option<Vec<f64>>,
    pub detection_frames: Vec<DetectionFrame>,
    /// Per-trial ledger; identical for every trial.
    pub ledger: ComplexityLedger,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub trials: Vec<TrialOutcome>,
}

impl Scenario {
    /// Runs every trial in parallel. Outcomes come back in trial order and
    /// are reduced sequentially, so the result does not depend on scheduling.
    pub fn run(&self) -> ExperimentResult {
        let trials: Vec<TrialOutcome> = (0..self.config().trials).into_par_iter().map(|t| self.run_trial(t)).collect();
        ExperimentResult { summary: summarize(self.config(), &trials), trials }
    }

    pub fn run_sequential(&self) -> ExperimentResult {
        let trials: Vec<TrialOutcome> = (0..self.config().trials).map(|t| self.run_trial(t)).collect();
        ExperimentResult { summary: summarize(self.config(), &trials), trials }
    }
}

pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentResult, HarnessError> {
    Ok(Scenario::new(cfg.clone())?.run())
}

/// Folds trial outcomes into a summary, in the order given.
pub fn summarize(cfg: &ScenarioConfig, trials: &[TrialOutcome]) -> Summary {
    let n = trials.len().max(1) as f64;
    let mut mse = vec![0.0; cfg.frames];
    let mut bound = vec![0.0; cfg.frames];
    let mut has_bound = !trials.is_empty();
    let mut detection_frames = Vec::new();
    for t in trials {
        for (i, r) in t.records.iter().enumerate() {
            mse[i] += r.err_norm * r.err_norm;
            match r.bound {
                Some(b) => bound[i] += b,
                None => has_bound = false,
            }
            if r.detected {
                detection_frames.push(DetectionFrame { trial: t.trial, frame: r.frame, realigned: r.realigned });
            }
        }
    }
    mse.iter_mut().for_each(|x| *x /= n);
    bound.iter_mut().for_each(|x| *x /= n);
    Summary {
        schema_version: SCHEMA_VERSION,
        scenario: cfg.clone(),
        per_frame_mse: mse,
        per_frame_bound: has_bound.then_some(bound),
        detection_frames,
        ledger: trials.first().map(|t| t.ledger).unwrap_or_else(|| ComplexityLedger::new(cfg.scheme, cfg.codebook_k())),
    }
}
