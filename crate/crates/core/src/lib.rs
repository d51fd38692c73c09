//! Beam tracking of a single-antenna UAV from a ground station equipped with a
//! uniform planar array.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: spatial angles and the rotational state-evolution model.
//! - [`channel`]: LOS channel, pilot snapshots, beamforming weights.
//! - [`monopulse`]: complex-comparison monopulse measurement extraction.
//! - [`ekf`]: the monopulse EKF and adaptive measurement-noise estimation.
//! - [`baselines`]: codebook-beamforming and auxiliary-beam-pair trackers.
//! - [`misalign`]: power-based error-norm estimation and realignment logic.
//! - [`analysis`]: the recursive MSE upper bound.
//! - [`harness`]: scenario configs, seeded Monte Carlo runs, traces, summaries.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod channel;
pub mod ekf;
pub mod geometry;
pub mod harness;
pub mod misalign;
pub mod monopulse;
pub mod rng;

pub use num_complex::Complex64;

/// Real 2x2 matrix used for state covariances, rotations and Jacobians.
pub type Mat2 = nalgebra::Matrix2<f64>;
/// Real 2-vector used for states, measurements and innovations.
pub type Vec2 = nalgebra::Vector2<f64>;
