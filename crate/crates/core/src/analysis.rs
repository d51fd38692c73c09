//! Recursive upper bound on the tracking MSE.
//!
//! With `A = (I - K G) F` and `B = I - K G`, the error covariance obeys
//! `P = A P_prev A^T + B Q_p B^T + K Q_n K^T` up to linearisation remainders.
//! Replacing `Q_n` by a relaxed `Q_n' >= Q_n` absorbs the remainders at high
//! SNR and yields the bound computed here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Mat2;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("relaxed noise covariance must dominate the filter's Q_n (min eigenvalue of the difference is {0})")]
    NotRelaxed(f64),
    #[error("the Taylor remainder term is not modelled; set neglect_remainder = true")]
    RemainderUnsupported,
}

/// Relaxed noise covariance used by the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub q_n_relaxed: Mat2,
    pub neglect_remainder: bool,
}

impl BoundConfig {
    /// `sigma_nb^2 I`.
    pub fn isotropic(sigma_nb2: f64) -> Self {
        Self { q_n_relaxed: Mat2::identity() * sigma_nb2, neglect_remainder: true }
    }

    /// Checks `Q_n' - Q_n >= 0` against the filter's noise covariance.
    pub fn validate(&self, q_n: &Mat2) -> Result<(), AnalysisError> {
        if !self.neglect_remainder {
            return Err(AnalysisError::RemainderUnsupported);
        }
        let d = self.q_n_relaxed - q_n;
        let min = d.symmetric_eigenvalues().min();
        if min < -1e-15 * self.q_n_relaxed.norm() {
            return Err(AnalysisError::NotRelaxed(min));
        }
        Ok(())
    }
}

/// `Tr(A P_prev A^T) + Tr(B Q_p B^T) + Tr(K Q_n' K^T)`.
pub fn bound_step(p_prev: &Mat2, k: &Mat2, g: &Mat2, f: &Mat2, q_p: &Mat2, q_n_relaxed: &Mat2) -> f64 {
    let b = Mat2::identity() - k * g;
    let a = b * f;
    (a * p_prev * a.transpose()).trace() + (b * q_p * b.transpose()).trace() + (k * q_n_relaxed * k.transpose()).trace()
}

/// Looseness due to the relaxation, `Tr(K (Q_n' - Q_n) K^T)`.
pub fn bound_gap(k: &Mat2, q_n_relaxed: &Mat2, q_n: &Mat2) -> f64 {
    (k * (q_n_relaxed - q_n) * k.transpose()).trace()
}
