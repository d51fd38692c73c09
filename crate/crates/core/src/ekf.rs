//! EKF over the monopulse measurement `g(x) = (tan(u/2), tan(v/2))`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SpatialState;
use crate::{Mat2, Vec2};

/// Distance from `+-pi` below which the exact Jacobian is refused.
pub const SINGULARITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EkfError {
    #[error("exact Jacobian is singular at ({u}, {v}); tan(x/2) diverges near +-pi")]
    JacobianSingularity { u: f64, v: f64 },
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
}

/// Estimate and error covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    pub estimate: SpatialState,
    pub covariance: Mat2,
}

impl TrackerState {
    pub fn new(estimate: SpatialState, covariance: Mat2) -> Self {
        Self { estimate, covariance }
    }
}

/// Linearisation of `g` used in the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// Constant `0.5 I`, the exact Jacobian at boresight.
    #[default]
    Boresight,
    /// `diag(0.5 sec^2(u/2), 0.5 sec^2(v/2))`.
    Exact,
}

/// Noiseless monopulse measurement of a state.
pub fn measurement_function(x: &SpatialState) -> Vec2 {
    Vec2::new((x.u / 2.0).tan(), (x.v / 2.0).tan())
}

pub fn predict(s: &TrackerState, f: &Mat2, q_p: &Mat2) -> TrackerState {
    let x = f * s.estimate.to_vector();
    let p = f * s.covariance * f.transpose() + q_p;
    TrackerState::new(SpatialState::from_vector(&x), p)
}

pub fn jacobian(x: &SpatialState, mode: JacobianMode) -> Result<Mat2, EkfError> {
    match mode {
        JacobianMode::Boresight => Ok(Mat2::identity() * 0.5),
        JacobianMode::Exact => {
            if x.u.abs() >= PI - SINGULARITY_MARGIN || x.v.abs() >= PI - SINGULARITY_MARGIN {
                return Err(EkfError::JacobianSingularity { u: x.u, v: x.v });
            }
            let sec2 = |a: f64| 1.0 / (a / 2.0).cos().powi(2);
            Ok(Mat2::new(0.5 * sec2(x.u), 0.0, 0.0, 0.5 * sec2(x.v)))
        }
    }
}

/// Everything produced by one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub state: TrackerState,
    pub gain: Mat2,
    pub innovation: Vec2,
    pub innovation_covariance: Mat2,
}

/// Measurement update. The posterior covariance is symmetrised.
pub fn update(pred: &TrackerState, r: &Vec2, g: &Mat2, q_n: &Mat2) -> Result<UpdateOutcome, EkfError> {
    let innovation = r - measurement_function(&pred.estimate);
    let s = g * pred.covariance * g.transpose() + q_n;
    let s_inv = invert_2x2(&s).ok_or(EkfError::SingularInnovation)?;
    let k = pred.covariance * g.transpose() * s_inv;
    let x = pred.estimate.to_vector() + k * innovation;
    let p = pred.covariance - k * s * k.transpose();
    let p = (p + p.transpose()) * 0.5;
    Ok(UpdateOutcome {
        state: TrackerState::new(SpatialState::from_vector(&x), p),
        gain: k,
        innovation,
        innovation_covariance: s,
    })
}

fn invert_2x2(m: &Mat2) -> Option<Mat2> {
    let det = m.determinant();
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    m.try_inverse()
}

/// Diagonal measurement-noise estimate from recent innovations.
///
/// The sample variance of the last `window` innovations, minus the predicted
/// part `G P^- G^T`, floored at `floor`. Falls back to `prior` until the
/// history holds a full window.
pub fn estimate_measurement_noise(history: &[Vec2], window: usize, predicted: &Mat2, prior: &Mat2, floor: f64) -> Mat2 {
    if window < 2 || history.len() < window {
        return *prior;
    }
    let recent = &history[history.len() - window..];
    let n = window as f64;
    let mean = recent.iter().fold(Vec2::zeros(), |acc, x| acc + x) / n;
    let var = recent.iter().fold(Vec2::zeros(), |acc, x| {
        let d = x - mean;
        acc + d.component_mul(&d)
    }) / (n - 1.0);
    let qx = (var[0] - predicted[(0, 0)]).max(floor);
    let qy = (var[1] - predicted[(1, 1)]).max(floor);
    Mat2::new(qx, 0.0, 0.0, qy)
}

/// Ring buffer of innovations feeding [`estimate_measurement_noise`].
#[derive(Debug, Clone)]
pub struct NoiseEstimator {
    window: usize,
    prior: Mat2,
    floor: f64,
    history: VecDeque<Vec2>,
}

impl NoiseEstimator {
    pub fn new(window: usize, prior: Mat2, floor: f64) -> Self {
        Self { window, prior, floor, history: VecDeque::with_capacity(window) }
    }

    pub fn push(&mut self, innovation: Vec2) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(innovation);
    }

    pub fn current(&mut self, predicted: &Mat2) -> Mat2 {
        let h = self.history.make_contiguous();
        estimate_measurement_noise(h, self.window, predicted, &self.prior, self.floor)
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }
}
