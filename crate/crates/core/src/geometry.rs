//! Flight geometry, angle conversions and the spatial-angle state model.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::gaussian;
use crate::{Mat2, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("element spacing ratio d/lambda must lie in (0, 0.5], got {0}")]
    SpacingRatio(f64),
    #[error("elevation must lie in [0, pi/2], got {0}")]
    Elevation(f64),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
}

/// Spatial angles `(u, v)`: the inter-element phase progression along the x
/// and y axes of the array. This is the tracked state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpatialState {
    pub u: f64,
    pub v: f64,
}

impl SpatialState {
    pub const ZERO: SpatialState = SpatialState { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn from_vector(x: &Vec2) -> Self {
        Self { u: x[0], v: x[1] }
    }

    pub fn to_vector(self) -> Vec2 {
        Vec2::new(self.u, self.v)
    }

    pub fn norm(self) -> f64 {
        self.u.hypot(self.v)
    }

    /// True when both angles lie in `[-pi, pi]`.
    pub fn in_principal_range(self) -> bool {
        self.u.abs() <= PI && self.v.abs() <= PI
    }

    /// Difference `self - other` with each component wrapped to `(-pi, pi]`.
    ///
    /// Spatial angles are phases, so an estimate off by a multiple of `2*pi`
    /// points the same beam.
    pub fn wrapped_difference(self, other: SpatialState) -> SpatialState {
        SpatialState::new(wrap_phase(self.u - other.u), wrap_phase(self.v - other.v))
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Circular-flight geometry around a ground station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightGeometry {
    /// Flight radius `R_o` in meters.
    pub flight_radius: f64,
    /// Height of the UAV above the station, in meters.
    pub station_height: f64,
    /// Element spacing over wavelength.
    pub spacing_ratio: f64,
    /// Frame period in seconds.
    pub frame_period: f64,
}

impl FlightGeometry {
    pub fn elevation(&self) -> Result<f64, GeometryError> {
        elevation_from_geometry(self.station_height, self.flight_radius)
    }

    /// Spatial angles of a UAV seen at azimuth `phi` on this circle.
    pub fn spatial_at(&self, phi: f64) -> Result<SpatialState, GeometryError> {
        angles_to_spatial(phi, self.elevation()?, self.spacing_ratio)
    }
}

/// Standard deviations of the per-frame random walk on `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl ProcessNoise {
    pub fn new(sigma_u: f64, sigma_v: f64) -> Self {
        Self { sigma_u, sigma_v }
    }

    pub fn covariance(&self) -> Mat2 {
        Mat2::new(self.sigma_u * self.sigma_u, 0.0, 0.0, self.sigma_v * self.sigma_v)
    }
}

/// `u = (2 pi d / lambda) cos(phi) sin(theta)`, `v = (2 pi d / lambda) sin(phi) sin(theta)`.
pub fn angles_to_spatial(phi: f64, theta: f64, spacing_ratio: f64) -> Result<SpatialState, GeometryError> {
    if !(spacing_ratio > 0.0 && spacing_ratio <= 0.5) {
        return Err(GeometryError::SpacingRatio(spacing_ratio));
    }
    if !(0.0..=PI / 2.0).contains(&theta) {
        return Err(GeometryError::Elevation(theta));
    }
    let k = 2.0 * PI * spacing_ratio;
    Ok(SpatialState::new(k * phi.cos() * theta.sin(), k * phi.sin() * theta.sin()))
}

/// Elevation of a UAV circling at radius `radius` and height `height`.
pub fn elevation_from_geometry(height: f64, radius: f64) -> Result<f64, GeometryError> {
    if !(height > 0.0) {
        return Err(GeometryError::NonPositive { what: "height", value: height });
    }
    if !(radius > 0.0) {
        return Err(GeometryError::NonPositive { what: "flight radius", value: radius });
    }
    Ok((radius / height).atan())
}

/// Rotation by `psi` acting on `(u, v)`.
pub fn rotation(psi: f64) -> Mat2 {
    let (s, c) = psi.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// One step of `x' = F x + n_p`.
///
/// The result is not clamped to `[-pi, pi]^2`; callers check
/// [`SpatialState::in_principal_range`] and record the violation.
pub fn evolve_state<R: Rng + ?Sized>(x: SpatialState, psi: f64, noise: &ProcessNoise, rng: &mut R) -> SpatialState {
    let rotated = rotation(psi) * x.to_vector();
    let nu = gaussian(rng, noise.sigma_u);
    let nv = gaussian(rng, noise.sigma_v);
    SpatialState::new(rotated[0] + nu, rotated[1] + nv)
}
