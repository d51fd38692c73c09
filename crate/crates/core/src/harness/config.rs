use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::analysis::BoundConfig;
use crate::baselines::{default_abp_offset, BeamPairConfig, Codebook};
use crate::channel::{ArrayConfig, GainProcess, PilotConfig};
use crate::ekf::JacobianMode;
use crate::geometry::{elevation_from_geometry, ProcessNoise, SpatialState};
use crate::misalign::DetectConfig;
use crate::monopulse::boresight_noise_variance;
use crate::Mat2;

/// Tracking scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Proposed,
    Codebook,
    Abp,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Codebook, Scheme::Abp];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Codebook => "codebook",
            Scheme::Abp => "abp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown scheme {s:?}; expected proposed, codebook or abp")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub n_x: usize,
    pub n_y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Flight height over flight radius.
    pub height_ratio: f64,
    /// Azimuth is drawn uniformly from `[-range, range]` degrees once per trial.
    pub azimuth_range_deg: f64,
    #[serde(default = "default_spacing")]
    pub spacing_ratio: f64,
}

fn default_spacing() -> f64 {
    0.5
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self { height_ratio: 8.0, azimuth_range_deg: 30.0, spacing_ratio: 0.5 }
    }
}

/// Overrides of the array-dependent detector defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub grid_max: Option<f64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub consecutive_required: Option<u32>,
    #[serde(default)]
    pub residual_after_realign: Option<f64>,
    #[serde(default)]
    pub coarse_range: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Default for DetectSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            grid_step: None,
            grid_max: None,
            threshold: None,
            consecutive_required: None,
            residual_after_realign: None,
            coarse_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    /// Relaxed monopulse noise variance per axis.
    pub sigma_nb2: f64,
    #[serde(default = "yes")]
    pub neglect_remainder: bool,
}

/// Where the proposed filter's measurement-noise covariance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QnMode {
    /// `sigma_n2 I`.
    Fixed,
    /// First-order boresight variance implied by the SNR.
    Matched,
    /// Innovation-based estimate, seeded with the matched value.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QnSpec {
    pub mode: QnMode,
    #[serde(default)]
    pub sigma_n2: Option<f64>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_window() -> usize {
    10
}

fn default_floor() -> f64 {
    1e-12
}

impl Default for QnSpec {
    fn default() -> Self {
        Self { mode: QnMode::Matched, sigma_n2: None, window: default_window(), floor: default_floor() }
    }
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub array: ArraySpec,
    pub scheme: Scheme,
    pub frames: usize,
    pub trials: usize,
    /// Per-element SNR in dB; `null` runs noiseless.
    pub snr_db: Option<f64>,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_init: f64,
    /// Rotation per frame; `null` means one revolution over the run.
    #[serde(default)]
    pub psi: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// `null` uses `1 - rho^2 / 2`.
    #[serde(default)]
    pub gain_innovation_variance: Option<f64>,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub detect: DetectSpec,
    #[serde(default)]
    pub bound: Option<BoundSpec>,
    #[serde(default)]
    pub qn: QnSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jacobian_mode: JacobianMode,
    /// Beams per axis of the baseline codebook; `null` means `n_x`.
    #[serde(default)]
    pub codebook_k: Option<usize>,
    /// Auxiliary beam squint; `null` means half the 3 dB beamwidth.
    #[serde(default)]
    pub abp_offset: Option<f64>,
}

fn default_rho() -> f64 {
    0.9
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Config(msg.into()))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("invalid scenario JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// `preset:NAME` or a path to a JSON file.
    pub fn resolve(spec: &str) -> Result<Self, HarnessError> {
        match spec.strip_prefix("preset:") {
            Some(name) => super::presets::preset(name),
            None => Self::load(Path::new(spec)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let arr = self.array_config()?;
        if self.frames == 0 || self.trials == 0 {
            return config_err("frames and trials must be at least 1");
        }
        for (what, v) in [("sigma_u", self.sigma_u), ("sigma_v", self.sigma_v), ("sigma_init", self.sigma_init)] {
            if !(v >= 0.0 && v.is_finite()) {
                return config_err(format!("{what} must be a finite value >= 0, got {v}"));
            }
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return config_err("snr_db must be finite; use null for a noiseless run");
            }
        }
        if let Some(psi) = self.psi {
            if !psi.is_finite() {
                return config_err("psi must be finite");
            }
        }
        if !(self.rho.abs() <= 1.0) {
            return config_err(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if let Some(var) = self.gain_innovation_variance {
            if !(var >= 0.0 && var.is_finite()) {
                return config_err("gain_innovation_variance must be >= 0");
            }
        }
        let g = &self.geometry;
        if !(g.height_ratio > 0.0 && g.height_ratio.is_finite()) {
            return config_err("geometry.height_ratio must be > 0");
        }
        if !(g.azimuth_range_deg >= 0.0 && g.azimuth_range_deg <= 180.0) {
            return config_err("geometry.azimuth_range_deg must lie in [0, 180]");
        }
        if !(g.spacing_ratio > 0.0 && g.spacing_ratio <= 0.5) {
            return config_err("geometry.spacing_ratio must lie in (0, 0.5]");
        }
        self.detect_config()?.validate(&arr).map_err(|e| HarnessError::Config(e.to_string()))?;
        let q = &self.qn;
        if q.mode == QnMode::Fixed && !matches!(q.sigma_n2, Some(v) if v > 0.0) {
            return config_err("qn.mode = fixed needs qn.sigma_n2 > 0");
        }
        if q.mode == QnMode::Estimated && q.window < 2 {
            return config_err("qn.window must be at least 2");
        }
        if !(q.floor > 0.0) {
            return config_err("qn.floor must be > 0");
        }
        if let Some(b) = self.bound_config() {
            b.validate(&self.nominal_q_n()).map_err(|e| HarnessError::Config(format!("bound: {e}")))?;
        }
        if self.codebook_k == Some(0) {
            return config_err("codebook_k must be at least 1");
        }
        let offset = self.abp_offset();
        BeamPairConfig::new(SpatialState::ZERO, offset, &arr).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn array_config(&self) -> Result<ArrayConfig, HarnessError> {
        ArrayConfig::new(self.array.n_x, self.array.n_y).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn pilot(&self) -> PilotConfig {
        PilotConfig::new(self.snr_db.unwrap_or(f64::INFINITY))
    }

    pub fn process_noise(&self) -> ProcessNoise {
        ProcessNoise::new(self.sigma_u, self.sigma_v)
    }

    pub fn psi(&self) -> f64 {
        self.psi.unwrap_or(2.0 * PI / self.frames as f64)
    }

    pub fn gain_process(&self) -> GainProcess {
        match self.gain_innovation_variance {
            Some(v) => GainProcess { correlation: self.rho, innovation_variance: v },
            None => GainProcess::literal(self.rho),
        }
    }

    pub fn elevation(&self) -> f64 {
        elevation_from_geometry(self.geometry.height_ratio, 1.0).expect("validated height ratio")
    }

    pub fn initial_covariance(&self) -> Mat2 {
        Mat2::identity() * (self.sigma_init * self.sigma_init)
    }

    pub fn detect_config(&self) -> Result<DetectConfig, HarnessError> {
        let mut d = DetectConfig::for_array(&self.array_config()?);
        let s = &self.detect;
        d.grid_step = s.grid_step.unwrap_or(d.grid_step);
        d.grid_max = s.grid_max.unwrap_or(d.grid_max);
        d.threshold = s.threshold.unwrap_or(d.threshold);
        d.consecutive_required = s.consecutive_required.unwrap_or(d.consecutive_required);
        d.residual_after_realign = s.residual_after_realign.unwrap_or(d.residual_after_realign);
        d.coarse_range = s.coarse_range.unwrap_or(d.coarse_range);
        Ok(d)
    }

    pub fn bound_config(&self) -> Option<BoundConfig> {
        self.bound.map(|b| BoundConfig { q_n_relaxed: Mat2::identity() * b.sigma_nb2, neglect_remainder: b.neglect_remainder })
    }

    /// Noise covariance implied by the SNR at boresight, floored.
    pub fn matched_q_n(&self) -> Mat2 {
        let v = boresight_noise_variance(self.array.n_x, self.array.n_y, self.pilot().noise_to_signal());
        Mat2::new(v[0].max(self.qn.floor), 0.0, 0.0, v[1].max(self.qn.floor))
    }

    /// The fixed covariance, or the starting point of the estimator.
    pub fn nominal_q_n(&self) -> Mat2 {
        match (self.qn.mode, self.qn.sigma_n2) {
            (QnMode::Fixed, Some(v)) => Mat2::identity() * v,
            (QnMode::Estimated, Some(v)) => Mat2::identity() * v,
            _ => self.matched_q_n(),
        }
    }

    pub fn codebook_k(&self) -> usize {
        self.codebook_k.unwrap_or(self.array.n_x)
    }

    pub fn codebook(&self) -> Result<Codebook, HarnessError> {
        Codebook::new(self.codebook_k(), self.array_config()?).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn abp_offset(&self) -> f64 {
        self.abp_offset.unwrap_or_else(|| default_abp_offset(self.array.n_x.max(self.array.n_y)))
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        Self { scheme, ..self.clone() }
    }
}
