use serde::{Deserialize, Serialize};

use super::config::{QnMode, ScenarioConfig, Scheme};
use super::ledger::ComplexityLedger;
use super::HarnessError;
use crate::analysis::bound_step;
use crate::baselines::{abp_tracker_step, codebook_tracker_step, Codebook};
use crate::channel::{beamformed_signal, beamforming_weight, channel_matrix, evolve_gain, synthesize_rx, vectorize, ArrayConfig, ChannelRealization};
use crate::ekf::{jacobian, predict, update, NoiseEstimator, TrackerState};
use crate::geometry::{angles_to_spatial, evolve_state, rotation, SpatialState};
use crate::misalign::{normalized_beam_power, realigned_truth, Detector};
use crate::monopulse::extract_measurement;
use crate::rng::{gaussian, Purpose, StreamKey};
use crate::{Complex64, Mat2};

/// One row of a trace. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub u_true: f64,
    pub v_true: f64,
    pub u_hat: f64,
    pub v_hat: f64,
    pub err_norm: f64,
    pub err_norm_hat: f64,
    pub p_r: f64,
    pub detected: bool,
    pub realigned: bool,
    /// Only the proposed scheme carries a bound.
    pub bound: Option<f64>,
    pub innov_norm: f64,
    pub meas_valid: bool,
}

impl FrameRecord {
    pub const COLUMNS: [&'static str; 13] = [
        "frame",
        "u_true",
        "v_true",
        "u_hat",
        "v_hat",
        "err_norm",
        "err_norm_hat",
        "p_r",
        "detected",
        "realigned",
        "bound",
        "innov_norm",
        "meas_valid",
    ];
}

/// A mechanical realignment. The frame's record keeps the values from
/// before the realignment; `truth_after` is where the target was put.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealignmentEvent {
    pub frame: usize,
    pub truth_before: SpatialState,
    pub truth_after: SpatialState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub records: Vec<FrameRecord>,
    pub realignments: Vec<RealignmentEvent>,
    pub ledger: ComplexityLedger,
    /// Frames whose truth left `[-pi, pi]^2`.
    pub range_violations: usize,
}

/// A validated config with everything that is shared across trials.
#[derive(Debug, Clone)]
pub struct Scenario {
    cfg: ScenarioConfig,
    array: ArrayConfig,
    codebook: Option<Codebook>,
}

enum NoiseSource {
    Fixed(Mat2),
    Estimated(NoiseEstimator),
}

impl NoiseSource {
    fn current(&mut self, predicted: &Mat2) -> Mat2 {
        match self {
            NoiseSource::Fixed(q) => *q,
            NoiseSource::Estimated(e) => e.current(predicted),
        }
    }
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let array = cfg.array_config()?;
        let codebook = match cfg.scheme {
            Scheme::Proposed => None,
            _ => Some(cfg.codebook()?),
        };
        Ok(Self { cfg, array, codebook })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Runs trial `trial`. Depends only on `(seed, trial)` and the config.
    pub fn run_trial(&self, trial: usize) -> TrialOutcome {
        let cfg = &self.cfg;
        let key = StreamKey::new(cfg.seed, trial as u64);
        let arr = self.array;
        let pilot = cfg.pilot();
        let nsr = pilot.noise_to_signal();
        let psi = cfg.psi();
        let f = rotation(psi);
        let noise = cfg.process_noise();
        let q_p = noise.covariance();
        let gain_process = cfg.gain_process();
        let detect_cfg = cfg.detect_config().expect("validated");
        let mut detector = Detector::new(detect_cfg, arr).expect("validated");
        let bound = if cfg.scheme == Scheme::Proposed { cfg.bound_config() } else { None };
        let p0 = cfg.initial_covariance();
        let k = cfg.codebook_k();
        let mut q_n = match cfg.qn.mode {
            QnMode::Estimated => NoiseSource::Estimated(NoiseEstimator::new(cfg.qn.window, cfg.nominal_q_n(), cfg.qn.floor)),
            _ => NoiseSource::Fixed(cfg.nominal_q_n()),
        };

        // Trial setup: azimuth, initial truth and estimate.
        let range = cfg.geometry.azimuth_range_deg.to_radians();
        let phi = {
            use rand::Rng;
            let mut rng = key.stream(0, Purpose::Azimuth);
            if range > 0.0 { rng.random_range(-range..=range) } else { 0.0 }
        };
        let mut truth = angles_to_spatial(phi, cfg.elevation(), cfg.geometry.spacing_ratio).expect("validated geometry");
        let mut alpha = Complex64::new(1.0, 0.0);
        let mut state = {
            let mut rng = key.stream(0, Purpose::InitialError);
            let du = gaussian(&mut rng, cfg.sigma_init);
            let dv = gaussian(&mut rng, cfg.sigma_init);
            TrackerState::new(SpatialState::new(truth.u + du, truth.v + dv), p0)
        };

        let mut records = Vec::with_capacity(cfg.frames);
        let mut realignments = Vec::new();
        let mut ledger = ComplexityLedger::new(cfg.scheme, k);
        let mut range_violations = 0;

        for frame in 1..=cfg.frames {
            let fr = frame as u64;
            truth = evolve_state(truth, psi, &noise, &mut key.stream(fr, Purpose::ProcessNoise));
            alpha = evolve_gain(alpha, &gain_process, &mut key.stream(fr, Purpose::GainInnovation));
            if !truth.in_principal_range() {
                range_violations += 1;
            }
            let h = channel_matrix(&ChannelRealization::unit(alpha, truth), &arr);
            let p_prev = state.covariance;

            // Channel estimation phase.
            let mut gain_and_jacobian = None;
            let mut innov_norm = 0.0;
            let mut meas_valid = false;
            match cfg.scheme {
                Scheme::Proposed => {
                    let pred = predict(&state, &f, &q_p);
                    state = pred;
                    let y = synthesize_rx(&h, &pilot, &mut key.stream(fr, Purpose::PilotNoise));
                    if let (Ok(m), Ok(g)) = (extract_measurement(&y), jacobian(&pred.estimate, cfg.jacobian_mode)) {
                        let qn = q_n.current(&(g * pred.covariance * g.transpose()));
                        if let Ok(out) = update(&pred, &m.r, &g, &qn) {
                            if let NoiseSource::Estimated(e) = &mut q_n {
                                e.push(out.innovation);
                            }
                            state = out.state;
                            gain_and_jacobian = Some((out.gain, g));
                            innov_norm = out.innovation.norm();
                            meas_valid = true;
                        }
                    }
                }
                Scheme::Codebook | Scheme::Abp => {
                    let cb = self.codebook.as_ref().expect("codebook built for baselines");
                    let mut rng = key.stream(fr, Purpose::BeamNoise);
                    let step = if cfg.scheme == Scheme::Codebook {
                        codebook_tracker_step(&state, &h, &pilot, cb, &f, &q_p, &mut rng)
                    } else {
                        abp_tracker_step(&state, &h, &pilot, cb, cfg.abp_offset(), &f, &q_p, &mut rng)
                    };
                    match step {
                        Ok(s) => {
                            state = s.state;
                            innov_norm = s.innovation_norm;
                            meas_valid = s.measurement_valid;
                        }
                        Err(_) => state = predict(&state, &f, &q_p),
                    }
                }
            }
            ledger.charge(cfg.scheme, k);

            let bound_value = bound.map(|b| {
                let (gain, g) = gain_and_jacobian.unwrap_or((Mat2::zeros(), Mat2::identity() * 0.5));
                bound_step(&p_prev, &gain, &g, &f, &q_p, &b.q_n_relaxed)
            });

            // Data transmission phase.
            let w = beamforming_weight(&state.estimate, &arr);
            let amp = h[(0, 0)];
            let r = beamformed_signal(
                &w,
                &vectorize(&h),
                pilot.data_symbol,
                pilot.noise_variance((amp * pilot.data_symbol).norm_sqr()),
                &mut key.stream(fr, Purpose::DataNoise),
            );
            let p_r = normalized_beam_power(r, amp, pilot.data_symbol, nsr, arr.elements());
            let est = detector.step(p_r);
            let realign = est.realigned && cfg.detect.enabled && cfg.scheme == Scheme::Proposed;

            let err = truth.wrapped_difference(state.estimate);
            records.push(FrameRecord {
                frame,
                u_true: truth.u,
                v_true: truth.v,
                u_hat: state.estimate.u,
                v_hat: state.estimate.v,
                err_norm: err.norm(),
                err_norm_hat: est.xi_hat,
                p_r,
                detected: est.detected,
                realigned: realign,
                bound: bound_value,
                innov_norm,
                meas_valid,
            });

            if realign {
                let after = realigned_truth(&detect_cfg, &mut key.stream(fr, Purpose::Realignment));
                realignments.push(RealignmentEvent { frame, truth_before: truth, truth_after: after });
                truth = after;
                state = TrackerState::new(SpatialState::ZERO, p0);
                if let NoiseSource::Estimated(e) = &mut q_n {
                    e.clear();
                }
            }
        }

        TrialOutcome { trial, records, realignments, ledger, range_violations }
    }
}

/// Convenience wrapper: validates `cfg` and runs one trial.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Result<TrialOutcome, HarnessError> {
    Ok(Scenario::new(cfg.clone())?.run_trial(trial))
}
