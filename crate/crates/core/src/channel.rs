//! LOS channel, pilot snapshots and beamforming.
//!
//! Matrices are indexed `(n, m)` with `n` along the x axis (`n_x` rows) and
//! `m` along the y axis (`n_y` columns). Vectorisation is column-major, which
//! is nalgebra's storage order, so `vec(A)[n + m * n_x] = A(n, m)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::SpatialState;
use crate::rng::complex_gaussian;
use crate::Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("array needs at least 2 elements per axis, got {n_x}x{n_y}")]
    ArrayTooSmall { n_x: usize, n_y: usize },
}

/// Uniform planar array dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_x: usize,
    pub n_y: usize,
}

impl ArrayConfig {
    pub fn new(n_x: usize, n_y: usize) -> Result<Self, ChannelError> {
        let arr = Self { n_x, n_y };
        arr.validate()?;
        Ok(arr)
    }

    pub fn square(n: usize) -> Result<Self, ChannelError> {
        Self::new(n, n)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_x < 2 || self.n_y < 2 {
            return Err(ChannelError::ArrayTooSmall { n_x: self.n_x, n_y: self.n_y });
        }
        Ok(())
    }

    /// Total number of elements.
    pub fn elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_square(&self) -> bool {
        self.n_x == self.n_y
    }
}

/// One frame's LOS channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    /// Small-scale complex gain `alpha`.
    pub gain: Complex64,
    /// Path-loss gain including antenna gain and transmit power.
    pub path_loss_gain: f64,
    pub path_loss_exponent: f64,
    /// Link distance in meters.
    pub distance: f64,
    pub spatial: SpatialState,
}

impl ChannelRealization {
    /// Unit link budget: only `alpha` and the angles matter.
    pub fn unit(gain: Complex64, spatial: SpatialState) -> Self {
        Self { gain, path_loss_gain: 1.0, path_loss_exponent: 0.0, distance: 1.0, spatial }
    }

    /// Common complex factor `rho * alpha / D^beta` of every element.
    pub fn amplitude(&self) -> Complex64 {
        self.gain * (self.path_loss_gain / self.distance.powf(self.path_loss_exponent))
    }
}

/// Pilot and data symbols and the operating SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    pub pilot_symbol: Complex64,
    pub data_symbol: Complex64,
    /// Per-element received SNR in dB. `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    /// Pilot slot length in seconds.
    pub slot_length: f64,
}

impl PilotConfig {
    pub fn new(snr_db: f64) -> Self {
        Self {
            pilot_symbol: Complex64::new(1.0, 0.0),
            data_symbol: Complex64::new(1.0, 0.0),
            snr_db,
            slot_length: 1.0,
        }
    }

    /// Noise-to-signal power ratio, `10^(-snr/10)`.
    pub fn noise_to_signal(&self) -> f64 {
        if self.snr_db.is_infinite() && self.snr_db > 0.0 {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    /// Per-element noise variance for an element receiving `signal_power`.
    pub fn noise_variance(&self, signal_power: f64) -> f64 {
        signal_power * self.noise_to_signal()
    }
}

/// Correlation and innovation variance of the Gauss-Markov channel gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainProcess {
    pub correlation: f64,
    pub innovation_variance: f64,
}

impl GainProcess {
    /// Innovation variance `1 - rho^2 / 2`, as written for the original model.
    pub fn literal(correlation: f64) -> Self {
        Self { correlation, innovation_variance: 1.0 - correlation * correlation / 2.0 }
    }

    /// Unit-power stationary normalisation, `1 - rho^2`.
    pub fn unit_power(correlation: f64) -> Self {
        Self { correlation, innovation_variance: 1.0 - correlation * correlation }
    }

    /// A gain that never changes.
    pub fn frozen() -> Self {
        Self { correlation: 1.0, innovation_variance: 0.0 }
    }

    /// Stationary variance `var / (1 - rho^2)`; infinite for `|rho| = 1`.
    pub fn stationary_variance(&self) -> f64 {
        self.innovation_variance / (1.0 - self.correlation * self.correlation)
    }
}

/// Received pilot snapshot, `n_x x n_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSnapshot(pub DMatrix<Complex64>);

impl RxSnapshot {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }
}

/// `[1, e^{-ju}, ..., e^{-j(n-1)u}]`.
pub fn steering_vector(u: f64, n: usize) -> DVector<Complex64> {
    DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(1.0, -(i as f64) * u)))
}

/// `H = (rho alpha / D^beta) a_x(u) a_y(v)^H`.
pub fn channel_matrix(c: &ChannelRealization, arr: &ArrayConfig) -> DMatrix<Complex64> {
    let ax = steering_vector(c.spatial.u, arr.n_x);
    let ay = steering_vector(c.spatial.v, arr.n_y);
    let amp = c.amplitude();
    DMatrix::from_fn(arr.n_x, arr.n_y, |n, m| amp * ax[n] * ay[m].conj())
}

/// `alpha' = rho alpha + eps`, `eps ~ CN(0, innovation_variance)`.
pub fn evolve_gain<R: Rng + ?Sized>(alpha: Complex64, process: &GainProcess, rng: &mut R) -> Complex64 {
    alpha * process.correlation + complex_gaussian(rng, process.innovation_variance)
}

/// `Y = H s + N`, noise variance chosen so every element sees `snr_db`.
pub fn synthesize_rx<R: Rng + ?Sized>(h: &DMatrix<Complex64>, pilot: &PilotConfig, rng: &mut R) -> RxSnapshot {
    let signal_power = (h[(0, 0)] * pilot.pilot_symbol).norm_sqr();
    let var = pilot.noise_variance(signal_power);
    let s = pilot.pilot_symbol;
    if var == 0.0 {
        return RxSnapshot(h.map(|x| x * s));
    }
    RxSnapshot(h.map(|x| x * s + complex_gaussian(rng, var)))
}

/// Unit-norm weight `vec(w_x(u) w_y(v)^H)` with `1/sqrt(n)` steering vectors.
pub fn beamforming_weight(x: &SpatialState, arr: &ArrayConfig) -> DVector<Complex64> {
    let wx = steering_vector(x.u, arr.n_x) / Complex64::from((arr.n_x as f64).sqrt());
    let wy = steering_vector(x.v, arr.n_y) / Complex64::from((arr.n_y as f64).sqrt());
    let outer = &wx * wy.adjoint();
    DVector::from_column_slice(outer.as_slice())
}

/// Column-major vectorisation of a channel matrix.
pub fn vectorize(h: &DMatrix<Complex64>) -> DVector<Complex64> {
    DVector::from_column_slice(h.as_slice())
}

/// Beamformed data-phase observation `w^H h s_d + w^H n`, with `n` i.i.d.
/// per element at variance `noise_variance`.
pub fn beamformed_signal<R: Rng + ?Sized>(
    w: &DVector<Complex64>,
    h_vec: &DVector<Complex64>,
    data_symbol: Complex64,
    noise_variance: f64,
    rng: &mut R,
) -> Complex64 {
    let signal = w.dotc(h_vec) * data_symbol;
    if noise_variance == 0.0 {
        return signal;
    }
    let noise = w.iter().fold(Complex64::new(0.0, 0.0), |acc, wi| acc + wi.conj() * complex_gaussian(rng, noise_variance));
    signal + noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn steering_vector_examples() {
        let a = steering_vector(0.0, 3);
        assert!(a.iter().all(|x| *x == c(1.0, 0.0)));
        let a = steering_vector(PI, 2);
        assert!(close(a[0], c(1.0, 0.0), 1e-15) && close(a[1], c(-1.0, 0.0), 1e-15));
        let a = steering_vector(PI / 2.0, 4);
        let want = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        for (got, want) in a.iter().zip(want) {
            assert!(close(*got, want, 1e-15), "{got} vs {want}");
        }
    }

    #[test]
    fn channel_matrix_examples() {
        let arr = ArrayConfig::square(2).unwrap();
        let h = channel_matrix(&ChannelRealization::unit(c(1.0, 0.0), SpatialState::ZERO), &arr);
        assert!(h.iter().all(|x| close(*x, c(1.0, 0.0), 1e-15)));

        let h = channel_matrix(&ChannelRealization::unit(c(1.0, 0.0), SpatialState::new(PI / 2.0, 0.0)), &arr);
        assert!(close(h[(0, 0)], c(1.0, 0.0), 1e-15));
        assert!(close(h[(0, 1)], c(1.0, 0.0), 1e-15));
        assert!(close(h[(1, 0)], c(0.0, -1.0), 1e-15));
        assert!(close(h[(1, 1)], c(0.0, -1.0), 1e-15));

        let real = ChannelRealization {
            gain: c(0.3, -1.2),
            path_loss_gain: 2.5,
            path_loss_exponent: 2.0,
            distance: 3.0,
            spatial: SpatialState::new(1.1, -0.4),
        };
        let h = channel_matrix(&real, &ArrayConfig::new(3, 5).unwrap());
        let expected = c(0.3, -1.2) * 2.5 / 9.0;
        assert!(close(h[(0, 0)], expected, 1e-15));
        let mag = expected.norm();
        assert!(h.iter().all(|x| (x.norm() - mag).abs() < 1e-14));
    }

    #[test]
    fn channel_matrix_is_rank_one() {
        let arr = ArrayConfig::new(6, 4).unwrap();
        for (u, v) in [(0.3, -1.2), (2.9, 0.1), (-0.7, -2.2)] {
            let h = channel_matrix(&ChannelRealization::unit(c(0.8, 0.6), SpatialState::new(u, v)), &arr);
            let sv = h.singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(s[1] < 1e-10 * s[0]);
        }
    }

    #[test]
    fn frozen_and_memoryless_gain() {
        let mut rng = StreamKey::new(0, 0).stream(0, Purpose::GainInnovation);
        assert_eq!(evolve_gain(c(1.0, 0.0), &GainProcess::frozen(), &mut rng), c(1.0, 0.0));

        let process = GainProcess { correlation: 0.0, innovation_variance: 1.0 };
        let a = evolve_gain(c(5.0, 5.0), &process, &mut StreamKey::new(0, 0).stream(1, Purpose::GainInnovation));
        let b = complex_gaussian(&mut StreamKey::new(0, 0).stream(1, Purpose::GainInnovation), 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn gain_variance_reaches_stationary_value() {
        let process = GainProcess::literal(0.9);
        let mut rng = StreamKey::new(4, 0).stream(0, Purpose::GainInnovation);
        let mut alpha = c(0.0, 0.0);
        for _ in 0..1000 {
            alpha = evolve_gain(alpha, &process, &mut rng);
        }
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            alpha = evolve_gain(alpha, &process, &mut rng);
            acc += alpha.norm_sqr();
        }
        let est = acc / n as f64;
        // (1 - 0.81 / 2) / (1 - 0.81)
        let stationary = 0.595 / 0.19;
        assert_abs_diff_eq!(process.stationary_variance(), stationary, epsilon = 1e-12);
        assert!((est / stationary - 1.0).abs() < 0.03, "{est} vs {stationary}");
    }

    #[test]
    fn noiseless_snapshot_is_scaled_channel() {
        let arr = ArrayConfig::new(4, 3).unwrap();
        let h = channel_matrix(&ChannelRealization::unit(c(0.5, 0.2), SpatialState::new(0.4, 0.9)), &arr);
        let mut pilot = PilotConfig::new(f64::INFINITY);
        pilot.pilot_symbol = Complex64::from_polar(1.0, 0.7);
        let y = synthesize_rx(&h, &pilot, &mut StreamKey::new(0, 0).stream(0, Purpose::PilotNoise));
        for (yi, hi) in y.matrix().iter().zip(h.iter()) {
            assert!(close(*yi, hi * pilot.pilot_symbol, 1e-15));
        }
        assert!(close(y.matrix()[(0, 0)] / pilot.pilot_symbol, h[(0, 0)], 1e-15));
    }

    #[test]
    fn snapshot_snr_matches_request() {
        let arr = ArrayConfig::square(4).unwrap();
        let h = channel_matrix(&ChannelRealization::unit(c(0.0, 2.0), SpatialState::new(0.4, -0.3)), &arr);
        let pilot = PilotConfig::new(7.0);
        let mut rng = StreamKey::new(11, 0).stream(0, Purpose::PilotNoise);
        let draws = 100_000 / arr.elements() + 1;
        let mut noise = 0.0;
        let mut count = 0usize;
        for _ in 0..draws {
            let y = synthesize_rx(&h, &pilot, &mut rng);
            for (yi, hi) in y.matrix().iter().zip(h.iter()) {
                noise += (yi - hi).norm_sqr();
                count += 1;
            }
        }
        let snr = 10.0 * (4.0 / (noise / count as f64)).log10();
        assert!((snr - 7.0).abs() < 0.1, "{snr}");
    }

    #[test]
    fn weight_examples() {
        let arr = ArrayConfig::square(2).unwrap();
        let w = beamforming_weight(&SpatialState::ZERO, &arr);
        assert!(w.iter().all(|x| close(*x, c(0.5, 0.0), 1e-15)));

        let arr = ArrayConfig::new(4, 6).unwrap();
        for (u, v) in [(0.1, 0.2), (-2.0, 3.0), (1.3, -0.4)] {
            assert_abs_diff_eq!(beamforming_weight(&SpatialState::new(u, v), &arr).norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn aligned_weight_gets_full_array_gain() {
        let arr = ArrayConfig::square(4).unwrap();
        let x = SpatialState::new(0.7, -1.1);
        let h = vectorize(&channel_matrix(&ChannelRealization::unit(c(1.0, 0.0), x), &arr));
        let w = beamforming_weight(&x, &arr);
        assert!(close(w.dotc(&h), c(4.0, 0.0), 1e-13));

        let mut rng = StreamKey::new(0, 0).stream(0, Purpose::DataNoise);
        let sd = Complex64::from_polar(1.0, 0.3);
        let r = beamformed_signal(&w, &h, sd, 0.0, &mut rng);
        assert!(close(r, sd * 4.0, 1e-13));
    }

    #[test]
    fn gain_bound_holds_with_equality_only_when_aligned() {
        let arr = ArrayConfig::new(5, 3).unwrap();
        let real = ChannelRealization { gain: c(0.6, 0.8), path_loss_gain: 2.0, path_loss_exponent: 1.0, distance: 4.0, spatial: SpatialState::new(0.5, 1.0) };
        let h = vectorize(&channel_matrix(&real, &arr));
        let limit = (arr.elements() as f64).sqrt() * real.amplitude().norm();
        let aligned = beamforming_weight(&real.spatial, &arr).dotc(&h).norm();
        assert_abs_diff_eq!(aligned, limit, epsilon = 1e-12);
        for dx in [0.05, -0.3, 1.0] {
            let off = beamforming_weight(&SpatialState::new(0.5 + dx, 1.0 - dx), &arr).dotc(&h).norm();
            assert!(off < limit - 1e-9);
        }
    }

    #[test]
    fn orthogonal_weight_rejects_signal() {
        let arr = ArrayConfig::square(4).unwrap();
        let h = vectorize(&channel_matrix(&ChannelRealization::unit(c(1.0, 0.0), SpatialState::ZERO), &arr));
        // First null of a 4-element axis.
        let w = beamforming_weight(&SpatialState::new(PI / 2.0, 0.0), &arr);
        let r = beamformed_signal(&w, &h, c(1.0, 0.0), 0.0, &mut StreamKey::new(0, 0).stream(0, Purpose::DataNoise));
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn combined_noise_keeps_element_variance() {
        let arr = ArrayConfig::square(4).unwrap();
        let w = beamforming_weight(&SpatialState::new(0.3, 0.2), &arr);
        let zero = DVector::from_element(arr.elements(), c(0.0, 0.0));
        let mut rng = StreamKey::new(3, 0).stream(0, Purpose::DataNoise);
        let n = 100_000;
        let var = 0.4;
        let acc: f64 = (0..n).map(|_| beamformed_signal(&w, &zero, c(1.0, 0.0), var, &mut rng).norm_sqr()).sum();
        assert!((acc / n as f64 / var - 1.0).abs() < 0.03);
    }
}
