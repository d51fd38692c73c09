//! Complex-comparison monopulse on a planar array.
//!
//! For a noiseless rank-one snapshot every adjacent-element ratio
//! `(a - b) / (a + b)` along the x axis equals `j tan(u/2)`, and likewise
//! `j tan(v/2)` along y. Averaging all pairs of each axis gives the
//! two-dimensional measurement `r = [Im R_x, Im R_y]`.
//!
//! The channel is `a_x(u) a_y(v)^H`, so phase advances by `+v` per column.
//! The y-axis ratio is therefore taken as `(Y(n, m+1) - Y(n, m)) / (Y(n, m+1) + Y(n, m))`,
//! which keeps the sign convention `Im R_y = tan(v/2)`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::channel::RxSnapshot;
use crate::{Complex64, Vec2};

/// Relative floor on `|a + b|`, as a fraction of the mean element magnitude.
pub const DENOMINATOR_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MonopulseError {
    #[error("snapshot is identically zero")]
    DegenerateSnapshot,
    #[error("all {pairs} {axis}-axis pairs fell below the denominator floor")]
    MeasurementFailure { axis: char, pairs: usize },
}

/// Snapshot divided by a single complex reference gain.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSnapshot {
    values: DMatrix<Complex64>,
    mean_magnitude: f64,
}

impl NormalizedSnapshot {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    fn floor(&self) -> f64 {
        DENOMINATOR_FLOOR * self.mean_magnitude
    }
}

/// Pair-averaged monopulse ratio for one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRatio {
    pub value: Complex64,
    /// Pairs dropped because their sum fell below the floor.
    pub excluded: usize,
}

/// Measurement fed to the EKF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonopulseMeasurement {
    /// `[Im R_x, Im R_y]`.
    pub r: Vec2,
    pub raw_rx: Complex64,
    pub raw_ry: Complex64,
    pub excluded_pairs: usize,
}

impl MonopulseMeasurement {
    /// False when any pair had to be excluded.
    pub fn is_clean(&self) -> bool {
        self.excluded_pairs == 0
    }
}

/// Removes the common complex gain. The reference is `Y(0,0)` unless its
/// magnitude is below the floor, in which case the largest element is used.
pub fn normalize_rx(y: &RxSnapshot) -> Result<NormalizedSnapshot, MonopulseError> {
    let m = y.matrix();
    let mean_mag = m.iter().map(|x| x.norm()).sum::<f64>() / m.len() as f64;
    if !(mean_mag > 0.0) {
        return Err(MonopulseError::DegenerateSnapshot);
    }
    let first = m[(0, 0)];
    let reference = if first.norm() > DENOMINATOR_FLOOR * mean_mag {
        first
    } else {
        *m.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).expect("non-empty snapshot")
    };
    let values = m.map(|x| x / reference);
    let mean_magnitude = mean_mag / reference.norm();
    Ok(NormalizedSnapshot { values, mean_magnitude })
}

fn pair_average<I>(pairs: I, axis: char, floor: f64) -> Result<AxisRatio, MonopulseError>
where
    I: Iterator<Item = (Complex64, Complex64)>,
{
    let mut sum = Complex64::new(0.0, 0.0);
    let mut used = 0usize;
    let mut excluded = 0usize;
    for (lead, lag) in pairs {
        let den = lead + lag;
        if den.norm() < floor {
            excluded += 1;
            continue;
        }
        sum += (lead - lag) / den;
        used += 1;
    }
    if used == 0 {
        return Err(MonopulseError::MeasurementFailure { axis, pairs: excluded });
    }
    Ok(AxisRatio { value: sum / used as f64, excluded })
}

/// Average of `(Y(n,m) - Y(n+1,m)) / (Y(n,m) + Y(n+1,m))` over all x-axis pairs.
pub fn monopulse_x(y: &NormalizedSnapshot) -> Result<AxisRatio, MonopulseError> {
    let m = &y.values;
    let (nx, ny) = m.shape();
    let pairs = (0..ny).flat_map(move |col| (0..nx - 1).map(move |row| (m[(row, col)], m[(row + 1, col)])));
    pair_average(pairs, 'x', y.floor())
}

/// Average of the y-axis pair ratios; see the module docs for the pair order.
pub fn monopulse_y(y: &NormalizedSnapshot) -> Result<AxisRatio, MonopulseError> {
    let m = &y.values;
    let (nx, ny) = m.shape();
    let pairs = (0..nx).flat_map(move |row| (0..ny - 1).map(move |col| (m[(row, col + 1)], m[(row, col)])));
    pair_average(pairs, 'y', y.floor())
}

pub fn extract_measurement(y: &RxSnapshot) -> Result<MonopulseMeasurement, MonopulseError> {
    let norm = normalize_rx(y)?;
    let rx = monopulse_x(&norm)?;
    let ry = monopulse_y(&norm)?;
    Ok(MonopulseMeasurement {
        r: Vec2::new(rx.value.im, ry.value.im),
        raw_rx: rx.value,
        raw_ry: ry.value,
        excluded_pairs: rx.excluded + ry.excluded,
    })
}

/// First-order variance of each measurement component for per-element
/// noise-to-signal ratio `nsr`, at boresight.
///
/// To first order the x-axis pair sum telescopes to the two edge elements of
/// each row, giving `nsr / (4 n_y (n_x - 1)^2)`.
pub fn boresight_noise_variance(n_x: usize, n_y: usize, nsr: f64) -> Vec2 {
    let vx = nsr / (4.0 * n_y as f64 * ((n_x - 1) as f64).powi(2));
    let vy = nsr / (4.0 * n_x as f64 * ((n_y - 1) as f64).powi(2));
    Vec2::new(vx, vy)
}
