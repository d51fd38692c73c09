//! Addressable random streams.
//!
//! Every random draw in a simulation is taken from a ChaCha8 stream keyed by
//! `(seed, trial)` and selected by `(frame, purpose)`. ChaCha is a counter-mode
//! generator, so any stream can be opened directly without replaying the ones
//! before it. That makes trial execution order irrelevant and lets competing
//! schemes share truth and noise realisations frame by frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Complex64;

/// What a stream is used for. The discriminant is part of the stream id, so
/// values must never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Azimuth = 1,
    InitialError = 2,
    ProcessNoise = 3,
    GainInnovation = 4,
    PilotNoise = 5,
    DataNoise = 6,
    BeamNoise = 7,
    Realignment = 8,
}

/// Key of one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub trial: u64,
}

impl StreamKey {
    pub fn new(seed: u64, trial: u64) -> Self {
        Self { seed, trial }
    }

    /// Opens the stream for `(frame, purpose)`. Frames above 2^56 alias.
    pub fn stream(&self, frame: u64, purpose: Purpose) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((frame << 8) | purpose as u64);
        rng
    }
}

/// Draws a real zero-mean Gaussian with standard deviation `std`.
pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    std * z
}

/// Draws a circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}
