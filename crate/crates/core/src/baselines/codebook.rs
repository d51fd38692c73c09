use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{linearized_update, BaselineError, BaselineStep};
use crate::channel::{beamforming_weight, vectorize, ArrayConfig, PilotConfig};
use crate::ekf::{predict, TrackerState};
use crate::geometry::SpatialState;
use crate::rng::complex_gaussian;
use crate::{Complex64, Mat2};

/// Floor on the per-component measurement variance.
const NOISE_FLOOR: f64 = 1e-12;

/// `K x K` grid of DFT beams, uniform over `[-pi, pi)` on each axis.
///
/// Beam `j` points at `(grid[j % K], grid[j / K])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    array: ArrayConfig,
    grid: Vec<f64>,
    weights: Vec<DVector<Complex64>>,
}

impl Codebook {
    pub fn new(k: usize, array: ArrayConfig) -> Result<Self, BaselineError> {
        if k == 0 {
            return Err(BaselineError::EmptyCodebook);
        }
        let grid: Vec<f64> = (0..k).map(|i| -PI + 2.0 * PI * i as f64 / k as f64).collect();
        let weights = (0..k * k)
            .map(|j| beamforming_weight(&SpatialState::new(grid[j % k], grid[j / k]), &array))
            .collect();
        Ok(Self { array, grid, weights })
    }

    pub fn beams_per_axis(&self) -> usize {
        self.grid.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn array(&self) -> &ArrayConfig {
        &self.array
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn beam(&self, j: usize) -> SpatialState {
        let k = self.grid.len();
        SpatialState::new(self.grid[j % k], self.grid[j / k])
    }

    pub fn weight(&self, j: usize) -> &DVector<Complex64> {
        &self.weights[j]
    }

    /// Grid point closest to `x` on each axis, measured around the circle.
    pub fn nearest(&self, x: &SpatialState) -> SpatialState {
        SpatialState::new(self.nearest_on_axis(x.u), self.nearest_on_axis(x.v))
    }

    fn nearest_on_axis(&self, a: f64) -> f64 {
        let k = self.grid.len() as f64;
        let step = 2.0 * PI / k;
        let i = ((a + PI) / step).round().rem_euclid(k) as usize;
        self.grid[i]
    }
}

/// `w_x(b)^H a_x(u)` and its derivative in `u`, for a `1/sqrt(n)` weight.
fn axis_factor(beam: f64, angle: f64, n: usize) -> (Complex64, Complex64) {
    let scale = 1.0 / (n as f64).sqrt();
    let d = angle - beam;
    let mut value = Complex64::new(0.0, 0.0);
    let mut deriv = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let e = Complex64::from_polar(1.0, -(i as f64) * d);
        value += e;
        deriv += e * Complex64::new(0.0, -(i as f64));
    }
    (value * scale, deriv * scale)
}

/// Noiseless unit-gain response `w(b)^H vec(a_x(u) a_y(v)^H)` of the beam
/// pointing at `beam`.
pub fn beam_response(beam: &SpatialState, x: &SpatialState, arr: &ArrayConfig) -> Complex64 {
    let (cx, _) = axis_factor(beam.u, x.u, arr.n_x);
    let (cy, _) = axis_factor(beam.v, x.v, arr.n_y);
    cx * cy.conj()
}

fn beam_response_with_gradient(beam: &SpatialState, x: &SpatialState, arr: &ArrayConfig) -> (Complex64, Complex64, Complex64) {
    let (cx, dcx) = axis_factor(beam.u, x.u, arr.n_x);
    let (cy, dcy) = axis_factor(beam.v, x.v, arr.n_y);
    (cx * cy.conj(), dcx * cy.conj(), cx * dcy.conj())
}

/// Beam-swept pilot observations, stacked as `[Re z_0, Im z_0, Re z_1, ...]`.
///
/// Each beam occupies its own pilot slot, so the combined noise of every beam
/// is independent with the per-element variance.
pub fn codebook_measurement<R: Rng + ?Sized>(
    h: &DMatrix<Complex64>,
    codebook: &Codebook,
    pilot: &PilotConfig,
    rng: &mut R,
) -> DVector<f64> {
    let h_vec = vectorize(h);
    let var = pilot.noise_variance((h[(0, 0)] * pilot.pilot_symbol).norm_sqr());
    let mut out = DVector::zeros(2 * codebook.len());
    for (j, w) in codebook.weights.iter().enumerate() {
        let mut z = w.dotc(&h_vec) * pilot.pilot_symbol;
        if var > 0.0 {
            z += complex_gaussian(rng, var);
        }
        out[2 * j] = z.re;
        out[2 * j + 1] = z.im;
    }
    out
}

/// Noiseless unit-gain measurement predicted for state `x`.
pub fn codebook_model(x: &SpatialState, codebook: &Codebook, pilot_symbol: Complex64) -> DVector<f64> {
    let mut out = DVector::zeros(2 * codebook.len());
    for j in 0..codebook.len() {
        let z = beam_response(&codebook.beam(j), x, &codebook.array) * pilot_symbol;
        out[2 * j] = z.re;
        out[2 * j + 1] = z.im;
    }
    out
}

/// `2K^2 x 2` Jacobian of [`codebook_model`].
pub fn codebook_jacobian(x: &SpatialState, codebook: &Codebook, pilot_symbol: Complex64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(2 * codebook.len(), 2);
    for j in 0..codebook.len() {
        let (_, du, dv) = beam_response_with_gradient(&codebook.beam(j), x, &codebook.array);
        let du = du * pilot_symbol;
        let dv = dv * pilot_symbol;
        jac[(2 * j, 0)] = du.re;
        jac[(2 * j + 1, 0)] = du.im;
        jac[(2 * j, 1)] = dv.re;
        jac[(2 * j + 1, 1)] = dv.im;
    }
    jac
}

/// One predict/update cycle of the codebook-beamforming EKF.
///
/// Observations are divided by the channel magnitude (automatic gain
/// control) before being compared with the unit-gain model.
pub fn codebook_tracker_step<R: Rng + ?Sized>(
    state: &TrackerState,
    h: &DMatrix<Complex64>,
    pilot: &PilotConfig,
    codebook: &Codebook,
    f: &Mat2,
    q_p: &Mat2,
    rng: &mut R,
) -> Result<BaselineStep, BaselineError> {
    let pred = predict(state, f, q_p);
    let agc = h[(0, 0)].norm();
    let z = codebook_measurement(h, codebook, pilot, rng) / agc;
    let innovation = z - codebook_model(&pred.estimate, codebook, pilot.pilot_symbol);
    let jac = codebook_jacobian(&pred.estimate, codebook, pilot.pilot_symbol);
    let var = (0.5 * pilot.noise_to_signal()).max(NOISE_FLOOR);
    let noise = DMatrix::from_diagonal_element(innovation.len(), innovation.len(), var);
    let (post, gain) = linearized_update(&pred, &innovation, &jac, &noise)?;
    Ok(BaselineStep { state: post, gain: Some(gain), innovation_norm: innovation.norm(), measurement_valid: true })
}
