//! Error-norm estimation from beamformed power, and the misalignment
//! detector that triggers a mechanical realignment.
//!
//! The received power of a beam steered at `x_hat` toward a target at `x` is
//! a separable Dirichlet kernel. Inside the main lobe it is approximated by
//! `cos^4(n_x |xi| / 4)`, which is inverted on a grid to recover `|xi|`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ArrayConfig;
use crate::geometry::SpatialState;
use crate::rng::gaussian;
use crate::Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum MisalignError {
    #[error("error norm {xi} is outside the main lobe [0, {limit})")]
    OutsideMainLobe { xi: f64, limit: f64 },
    #[error("detector config: {0}")]
    Config(String),
}

/// Grid, threshold and realignment parameters. Angles are spatial-angle
/// radians on the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub grid_step: f64,
    pub grid_max: f64,
    pub threshold: f64,
    pub consecutive_required: u32,
    /// Std-dev of each spatial angle right after a realignment.
    pub residual_after_realign: f64,
    /// Half-width of the range the coarse alignment can leave the target in.
    pub coarse_range: f64,
}

impl DetectConfig {
    pub fn for_array(arr: &ArrayConfig) -> Self {
        let lobe = 2.0 * PI / arr.n_x as f64;
        Self {
            grid_step: lobe / 1000.0,
            grid_max: 0.95 * lobe,
            threshold: 0.89 * PI / arr.n_x as f64,
            consecutive_required: 1,
            residual_after_realign: 0.01,
            coarse_range: 0.05,
        }
    }

    pub fn validate(&self, arr: &ArrayConfig) -> Result<(), MisalignError> {
        let lobe = 2.0 * PI / arr.n_x as f64;
        let bad = |m: &str| Err(MisalignError::Config(m.to_string()));
        if !(self.grid_step > 0.0 && self.grid_step < self.grid_max && self.grid_max < lobe) {
            return bad("need 0 < grid_step < grid_max < 2pi/n_x");
        }
        if !(self.threshold > 0.0 && self.threshold <= self.grid_max) {
            return bad("threshold must lie in (0, grid_max]");
        }
        if self.consecutive_required == 0 {
            return bad("consecutive_required must be at least 1");
        }
        if !(self.residual_after_realign >= 0.0 && self.coarse_range > 0.0) {
            return bad("realignment residual must be >= 0 and coarse range > 0");
        }
        Ok(())
    }

    fn grid_len(&self) -> usize {
        // Small slack so that a grid_max landing on a grid point keeps it.
        ((self.grid_max / self.grid_step) * (1.0 + 1e-12)).floor() as usize
    }
}

/// `sin(n d / 2) / (n sin(d / 2))`, equal to 1 at `d = 0`.
fn dirichlet(d: f64, n: usize) -> f64 {
    let half = 0.5 * d;
    let den = n as f64 * half.sin();
    if den.abs() < 1e-12 {
        // Removable singularity at multiples of 2 pi.
        let k = (d / (2.0 * PI)).round();
        return if (k as i64 * (n as i64 - 1)) % 2 == 0 { 1.0 } else { -1.0 };
    }
    (n as f64 * half).sin() / den
}

/// Normalised received power of a beam at `x_hat` for a target at `x`, in `[0, 1]`.
pub fn received_power(x: &SpatialState, x_hat: &SpatialState, arr: &ArrayConfig) -> f64 {
    (dirichlet(x.u - x_hat.u, arr.n_x) * dirichlet(x.v - x_hat.v, arr.n_y)).powi(2)
}

/// Main-lobe approximation `cos^4(n_x xi / 4)`.
pub fn approx_power(xi_norm: f64, n_x: usize) -> Result<f64, MisalignError> {
    let limit = 2.0 * PI / n_x as f64;
    // The lobe edge itself is admitted: the approximation reaches zero there.
    if !(0.0..=limit).contains(&xi_norm) {
        return Err(MisalignError::OutsideMainLobe { xi: xi_norm, limit });
    }
    Ok((n_x as f64 * xi_norm / 4.0).cos().powi(4))
}

/// Grid inversion of a measured power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormInversion {
    pub xi_hat: f64,
    /// Set when the input power exceeded 1 and was clamped.
    pub clamped: bool,
}

/// Grid argmin over `[0 : step : max]` of `|p_r - cos^4(n_x g / 4)|`, ties
/// broken toward the smaller `g`.
///
/// The approximation is strictly decreasing on the grid, so the argmin is
/// one of the two grid points around the analytic inverse.
pub fn estimate_error_norm(p_r: f64, cfg: &DetectConfig, n_x: usize) -> NormInversion {
    let clamped = p_r > 1.0;
    let p = p_r.clamp(0.0, 1.0);
    let a = n_x as f64 / 4.0;
    let n = cfg.grid_len();
    let f = |i: usize| (a * i as f64 * cfg.grid_step).cos().powi(4);
    let exact = p.powf(0.25).acos() / a;
    let lo = ((exact / cfg.grid_step).floor() as usize).min(n);
    let hi = (lo + 1).min(n);
    let best = if (p - f(hi)).abs() < (p - f(lo)).abs() { hi } else { lo };
    NormInversion { xi_hat: best as f64 * cfg.grid_step, clamped }
}

/// Rectangular-array variant. The per-axis model
/// `cos^2(sqrt2 n_x xi_x / 4) cos^2(sqrt2 n_y xi_y / 4)` reduces to the square
/// formula on the diagonal. One power cannot separate the two axes, so the
/// search runs over the 2-D grid points nearest the ray `n_x xi_x = n_y xi_y`
/// (equal fraction of each main lobe).
pub fn estimate_error_norm_rect(p_r: f64, cfg: &DetectConfig, arr: &ArrayConfig) -> NormInversion {
    if arr.is_square() {
        return estimate_error_norm(p_r, cfg, arr.n_x);
    }
    let clamped = p_r > 1.0;
    let p = p_r.clamp(0.0, 1.0);
    let step = cfg.grid_step / SQRT_2;
    let ratio = arr.n_x as f64 / arr.n_y as f64;
    let nx = cfg.grid_len();
    let ny = ((cfg.grid_max * ratio / cfg.grid_step) * (1.0 + 1e-12)).floor() as usize;
    let model = |x: f64, y: f64| {
        let cx = (SQRT_2 * arr.n_x as f64 * x / 4.0).cos();
        let cy = (SQRT_2 * arr.n_y as f64 * y / 4.0).cos();
        (cx * cy).powi(2)
    };
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=nx {
        let x = i as f64 * step;
        let j = ((x * ratio / step).round() as usize).min(ny);
        let y = j as f64 * step;
        let misfit = (p - model(x, y)).abs();
        if misfit < best.0 {
            best = (misfit, x.hypot(y));
        }
    }
    NormInversion { xi_hat: best.1, clamped }
}

/// Normalised power estimate from one beamformed data observation `r`.
///
/// Divides out the channel magnitude and data symbol power, subtracts the
/// known noise floor and normalises by the array gain `n`.
pub fn normalized_beam_power(r: Complex64, amplitude: Complex64, data_symbol: Complex64, nsr: f64, n: usize) -> f64 {
    let reference = amplitude.norm_sqr() * data_symbol.norm_sqr();
    ((r.norm_sqr() / reference - nsr) / n as f64).max(0.0)
}

/// Output of one detector step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub xi_hat: f64,
    pub p_r: f64,
    pub detected: bool,
    /// The caller must realign the mechanics and reset the tracker.
    pub realigned: bool,
}

/// Consecutive-exceedance detector.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectConfig,
    arr: ArrayConfig,
    consecutive: u32,
}

impl Detector {
    pub fn new(cfg: DetectConfig, arr: ArrayConfig) -> Result<Self, MisalignError> {
        cfg.validate(&arr)?;
        Ok(Self { cfg, arr, consecutive: 0 })
    }

    pub fn config(&self) -> &DetectConfig {
        &self.cfg
    }

    pub fn step(&mut self, p_r: f64) -> ErrorEstimate {
        let xi_hat = estimate_error_norm_rect(p_r, &self.cfg, &self.arr).xi_hat;
        let detected = xi_hat > self.cfg.threshold;
        self.consecutive = if detected { self.consecutive + 1 } else { 0 };
        let realigned = self.consecutive >= self.cfg.consecutive_required;
        if realigned {
            self.consecutive = 0;
        }
        ErrorEstimate { xi_hat, p_r, detected, realigned }
    }

    pub fn reset(&mut self) {
        self.consecutive = 0;
    }
}

/// Target position left by the coarse mechanical alignment.
pub fn realigned_truth<R: Rng + ?Sized>(cfg: &DetectConfig, rng: &mut R) -> SpatialState {
    let draw = |rng: &mut R| gaussian(rng, cfg.residual_after_realign).clamp(-cfg.coarse_range, cfg.coarse_range);
    let u = draw(rng);
    let v = draw(rng);
    SpatialState::new(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{beamforming_weight, channel_matrix, vectorize, ChannelRealization};
    use crate::rng::{Purpose, StreamKey};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn arr8() -> ArrayConfig {
        ArrayConfig::square(8).unwrap()
    }

    #[test]
    fn received_power_examples() {
        let a = arr8();
        let x = SpatialState::new(0.3, -0.2);
        assert_eq!(received_power(&x, &x, &a), 1.0);
        assert!(received_power(&SpatialState::new(0.3 + 2.0 * PI / 8.0, -0.2), &x, &a) < 1e-28);
        let p = received_power(&SpatialState::new(0.2, 0.0), &SpatialState::ZERO, &a);
        assert_abs_diff_eq!(p, 0.8067477028219081, epsilon = 1e-14);
        // Grating lobe of an even-length array.
        assert_abs_diff_eq!(received_power(&SpatialState::new(2.0 * PI, 0.0), &SpatialState::ZERO, &a), 1.0);
    }

    #[test]
    fn received_power_matches_beamformer_gain() {
        let a = ArrayConfig::new(8, 4).unwrap();
        let mut rng = StreamKey::new(11, 0).stream(0, Purpose::Azimuth);
        for _ in 0..50 {
            let x = SpatialState::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let x_hat = SpatialState::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let h = channel_matrix(&ChannelRealization::unit(Complex64::new(1.0, 0.0), x), &a);
            let g = beamforming_weight(&x_hat, &a).dotc(&vectorize(&h)).norm_sqr() / a.elements() as f64;
            assert_abs_diff_eq!(received_power(&x, &x_hat, &a), g, epsilon = 1e-12);
        }
    }

    #[test]
    fn approx_power_examples() {
        assert_eq!(approx_power(0.0, 8).unwrap(), 1.0);
        assert!(approx_power(2.0 * PI / 8.0, 8).unwrap() < 1e-30);
        assert_abs_diff_eq!(approx_power(0.2, 8).unwrap(), 0.7197034143859217, epsilon = 1e-15);
        assert!(approx_power(-0.1, 8).is_err());
        assert!(approx_power(0.8, 8).is_err());
    }

    #[test]
    fn inversion_roundtrips_every_grid_point() {
        for n in [4usize, 8, 16] {
            let cfg = DetectConfig::for_array(&ArrayConfig::square(n).unwrap());
            for i in 0..=cfg.grid_len() {
                let g = i as f64 * cfg.grid_step;
                let est = estimate_error_norm(approx_power(g, n).unwrap(), &cfg, n);
                assert_eq!(est.xi_hat, g, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn inversion_edges() {
        let cfg = DetectConfig::for_array(&arr8());
        assert_eq!(estimate_error_norm(1.0, &cfg, 8).xi_hat, 0.0);
        let sat = estimate_error_norm(0.0, &cfg, 8);
        assert_abs_diff_eq!(sat.xi_hat, cfg.grid_len() as f64 * cfg.grid_step);
        assert!(sat.xi_hat <= cfg.grid_max);
        let over = estimate_error_norm(1.2, &cfg, 8);
        assert!(over.clamped && over.xi_hat == 0.0);
    }

    #[test]
    fn inversion_matches_exhaustive_search() {
        let cfg = DetectConfig::for_array(&arr8());
        let mut rng = StreamKey::new(5, 0).stream(0, Purpose::Azimuth);
        for _ in 0..200 {
            let p: f64 = rng.random_range(0.0..1.0);
            let brute = (0..=cfg.grid_len())
                .map(|i| (i, (p - approx_power(i as f64 * cfg.grid_step, 8).unwrap()).abs()))
                .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
                .0;
            assert_eq!(estimate_error_norm(p, &cfg, 8).xi_hat, brute as f64 * cfg.grid_step);
        }
    }

    #[test]
    fn rectangular_inversion_reduces_to_square_model() {
        let a = ArrayConfig::new(8, 4).unwrap();
        let cfg = DetectConfig::for_array(&a);
        // Along the ray the model is cos^2(sqrt2 n_x x / 4)^2 with x = xi_x.
        let xi_x = 0.1 / SQRT_2;
        let xi_y = xi_x * 2.0;
        let p = ((SQRT_2 * 8.0 * xi_x / 4.0).cos() * (SQRT_2 * 4.0 * xi_y / 4.0).cos()).powi(2);
        let est = estimate_error_norm_rect(p, &cfg, &a);
        assert_abs_diff_eq!(est.xi_hat, xi_x.hypot(xi_y), epsilon = 3.0 * cfg.grid_step);
        assert_eq!(estimate_error_norm_rect(1.0, &cfg, &a).xi_hat, 0.0);
    }

    #[test]
    fn threshold_default() {
        let cfg = DetectConfig::for_array(&arr8());
        assert_abs_diff_eq!(cfg.threshold, 0.3495021827118645, epsilon = 1e-15);
        assert!(cfg.validate(&arr8()).is_ok());
        let mut bad = cfg;
        bad.grid_max = 2.0 * PI / 8.0;
        assert!(bad.validate(&arr8()).is_err());
        bad = cfg;
        bad.threshold = cfg.grid_max * 1.01;
        assert!(bad.validate(&arr8()).is_err());
        bad = cfg;
        bad.consecutive_required = 0;
        assert!(Detector::new(bad, arr8()).is_err());
    }

    #[test]
    fn approximation_quality_on_diagonal() {
        // The cos^4 model is coarse away from boresight: the gap on the
        // half-lobe diagonal reaches about 0.18, not 0.05.
        let a = arr8();
        let max = (0..=2000)
            .map(|i| i as f64 / 2000.0 * PI / 8.0)
            .map(|r| {
                let d = r / SQRT_2;
                (received_power(&SpatialState::new(d, d), &SpatialState::ZERO, &a) - approx_power(r, 8).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(max, 0.17897695708587824, epsilon = 1e-4);
    }

    #[test]
    fn detector_never_fires_below_threshold() {
        let mut d = Detector::new(DetectConfig::for_array(&arr8()), arr8()).unwrap();
        for k in 0..100 {
            let xi = 0.3 * k as f64 / 100.0;
            let e = d.step(approx_power(xi, 8).unwrap());
            assert!(!e.detected && !e.realigned);
        }
    }

    #[test]
    fn noiseless_ramp_fires_exactly_at_crossing() {
        let a = arr8();
        let mut d = Detector::new(DetectConfig::for_array(&a), a).unwrap();
        let threshold = d.config().threshold;
        // Diagonal ramp, evaluated with the approximation it inverts.
        let mut fired = None;
        for k in 0..100 {
            let xi = 0.005 * k as f64;
            let e = d.step(approx_power(xi, 8).unwrap());
            if e.realigned {
                fired = Some(k);
                break;
            }
        }
        let crossing = (0..100).find(|&k| 0.005 * k as f64 > threshold).unwrap();
        assert_eq!(fired, Some(crossing));
    }

    #[test]
    fn consecutive_counter_resets() {
        let a = arr8();
        let mut cfg = DetectConfig::for_array(&a);
        cfg.consecutive_required = 2;
        let mut d = Detector::new(cfg, a).unwrap();
        let high = approx_power(0.5, 8).unwrap();
        let low = approx_power(0.1, 8).unwrap();
        assert!(d.step(high).detected);
        assert!(!d.step(low).detected);
        assert!(!d.step(high).realigned);
        assert!(d.step(high).realigned);
        assert!(!d.step(high).realigned);
    }

    #[test]
    fn realignment_stays_within_three_sigma() {
        let cfg = DetectConfig::for_array(&arr8());
        for t in 0..1000 {
            let x = realigned_truth(&cfg, &mut StreamKey::new(1, t).stream(0, Purpose::Realignment));
            assert!(x.u.abs() < 3.0 * cfg.residual_after_realign + 0.02);
            assert!(x.u.abs() <= cfg.coarse_range && x.v.abs() <= cfg.coarse_range);
        }
    }

    #[test]
    fn beam_power_estimate_is_unbiased() {
        let a = arr8();
        let nsr = 10f64.powf(-1.0);
        let x = SpatialState::new(0.1, 0.05);
        let amp = Complex64::from_polar(0.7, 1.1);
        let h = vectorize(&channel_matrix(&ChannelRealization::unit(amp, x), &a));
        let w = beamforming_weight(&SpatialState::ZERO, &a);
        let mut rng = StreamKey::new(2, 0).stream(0, Purpose::DataNoise);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| {
                let r = crate::channel::beamformed_signal(&w, &h, Complex64::new(1.0, 0.0), amp.norm_sqr() * nsr, &mut rng);
                (r.norm_sqr() / amp.norm_sqr() - nsr) / 64.0
            })
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(mean, received_power(&x, &SpatialState::ZERO, &a), epsilon = 0.01);
        assert_eq!(normalized_beam_power(Complex64::new(0.0, 0.0), amp, Complex64::new(1.0, 0.0), nsr, 64), 0.0);
    }

    proptest! {
        #[test]
        fn approx_power_is_strictly_decreasing(a in 0.0..0.78f64, b in 0.0..0.78f64) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(approx_power(lo, 8).unwrap() > approx_power(hi, 8).unwrap());
        }

        #[test]
        fn received_power_is_bounded(u in -4.0..4.0f64, v in -4.0..4.0f64) {
            let p = received_power(&SpatialState::new(u, v), &SpatialState::ZERO, &arr8());
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        }
    }
}
