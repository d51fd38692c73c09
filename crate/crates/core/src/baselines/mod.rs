//! Comparison trackers that measure beamformed pilots instead of the raw
//! element signals: a codebook-beamforming EKF and an auxiliary-beam-pair EKF.
//!
//! Both see the channel after automatic gain control has removed its
//! magnitude; neither knows the phase of the channel gain.

mod abp;
mod codebook;

pub use abp::{
    abp_jacobian, abp_model, abp_noise_covariance, abp_ratio_metric, abp_tracker_step, default_abp_offset, BeamPairConfig,
};
pub use codebook::{beam_response, codebook_jacobian, codebook_measurement, codebook_model, codebook_tracker_step, Codebook};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ekf::{EkfError, TrackerState};
use crate::geometry::SpatialState;
use crate::Mat2;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("codebook needs at least one beam per axis")]
    EmptyCodebook,
    #[error("auxiliary beam offset must lie in (0, 2pi/n_x), got {0}")]
    BeamOffset(f64),
    #[error("both auxiliary beam powers fell below the floor on the {0} axis")]
    MeasurementFailure(char),
    #[error(transparent)]
    Ekf(#[from] EkfError),
}

/// Result of one baseline predict/update cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStep {
    pub state: TrackerState,
    /// `2 x m` Kalman gain; `None` when the update was skipped.
    pub gain: Option<DMatrix<f64>>,
    pub innovation_norm: f64,
    pub measurement_valid: bool,
}

/// EKF update for an `m`-dimensional measurement with `m x 2` Jacobian.
///
/// Solves the `m x m` innovation covariance by Cholesky, which is the
/// `O(m^3)` cost charged to these schemes.
pub(crate) fn linearized_update(
    pred: &TrackerState,
    innovation: &DVector<f64>,
    jac: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> Result<(TrackerState, DMatrix<f64>), EkfError> {
    let p = DMatrix::from_column_slice(2, 2, pred.covariance.as_slice());
    let gp = jac * &p;
    let s = &gp * jac.transpose() + noise;
    let chol = s.clone().cholesky().ok_or(EkfError::SingularInnovation)?;
    // S K^T = G P
    let k = chol.solve(&gp).transpose();
    let dx = &k * innovation;
    let x = SpatialState::new(pred.estimate.u + dx[0], pred.estimate.v + dx[1]);
    let kskt = &k * &s * k.transpose();
    let post = pred.covariance - Mat2::from_column_slice(kskt.as_slice());
    let post = (post + post.transpose()) * 0.5;
    Ok((TrackerState::new(x, post), k))
}
