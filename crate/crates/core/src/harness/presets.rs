//! Named scenarios for the figure reproductions.

use super::config::{ArraySpec, BoundSpec, DetectSpec, GeometrySpec, QnMode, QnSpec, ScenarioConfig, Scheme};
use super::HarnessError;
use crate::ekf::JacobianMode;

/// Name and one-line description of every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig4a", "8x8 tracking trace, SNR 30 dB, sigma 0.005"),
    ("fig4b", "8x8 tracking trace, SNR 10 dB, sigma 0.01"),
    ("fig5", "8x8 beamforming gain over time, SNR 10 dB, sigma 0.005"),
    ("fig6", "8x8 misalignment detection, h = 2 R_o, SNR 30 dB, sigma 0.05"),
    ("fig7-4x4", "MSE and upper bound, 4x4, SNR 10 dB"),
    ("fig7-8x8", "MSE and upper bound, 8x8, SNR 10 dB"),
    ("fig7-16x16", "MSE and upper bound, 16x16, SNR 10 dB"),
    ("fig8-small", "MSE with small initial error (5e-5), 8x8, SNR 10 dB"),
    ("fig8-large", "MSE with large initial error (5e-3), 8x8, SNR 10 dB"),
    ("fig9", "MSE at one point of the SNR sweep, 8x8, SNR 10 dB"),
];

fn base(name: &str, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        array: ArraySpec { n_x: n, n_y: n },
        scheme: Scheme::Proposed,
        frames: 50,
        trials: 500,
        snr_db: Some(10.0),
        sigma_u: 0.005,
        sigma_v: 0.005,
        sigma_init: 5e-5,
        psi: None,
        rho: 0.9,
        gain_innovation_variance: None,
        geometry: GeometrySpec::default(),
        detect: DetectSpec::default(),
        bound: None,
        qn: QnSpec::default(),
        seed: 2024,
        jacobian_mode: JacobianMode::Boresight,
        codebook_k: None,
        abp_offset: None,
    }
}

/// Bound scenario. The 8x8 noise values are the published ones; other sizes
/// scale them by the first-order monopulse variance `1 / (n_y (n_x - 1)^2)`.
fn bound_preset(name: &str, n: usize) -> ScenarioConfig {
    let scale = (8.0 * 49.0) / (n as f64 * ((n - 1) * (n - 1)) as f64);
    let mut c = base(name, n);
    c.trials = 1000;
    c.qn = QnSpec { mode: QnMode::Fixed, sigma_n2: Some(5e-6 * scale), ..QnSpec::default() };
    c.bound = Some(BoundSpec { sigma_nb2: 3e-5 * scale, neglect_remainder: true });
    c
}

pub fn preset(name: &str) -> Result<ScenarioConfig, HarnessError> {
    let cfg = match name {
        "fig4a" => ScenarioConfig { frames: 100, trials: 100, snr_db: Some(30.0), ..base(name, 8) },
        "fig4b" => ScenarioConfig { frames: 100, trials: 100, sigma_u: 0.01, sigma_v: 0.01, ..base(name, 8) },
        "fig5" => ScenarioConfig { frames: 100, trials: 100, ..base(name, 8) },
        "fig6" => ScenarioConfig {
            frames: 100,
            trials: 200,
            snr_db: Some(30.0),
            sigma_u: 0.05,
            sigma_v: 0.05,
            sigma_init: 5e-3,
            geometry: GeometrySpec { height_ratio: 2.0, ..GeometrySpec::default() },
            ..base(name, 8)
        },
        "fig7-4x4" => bound_preset(name, 4),
        "fig7-8x8" => bound_preset(name, 8),
        "fig7-16x16" => bound_preset(name, 16),
        "fig8-small" => base(name, 8),
        "fig8-large" => ScenarioConfig { sigma_init: 5e-3, ..base(name, 8) },
        "fig9" => base(name, 8),
        _ => return Err(HarnessError::UnknownPreset(name.to_string())),
    };
    cfg.validate()?;
    Ok(cfg)
}
