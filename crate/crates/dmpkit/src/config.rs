//! Run configuration loaded from TOML or JSON.
//!
//! Every section and field is optional; missing values take the library
//! defaults. Unknown keys are errors.

use std::path::Path;

use dmpkit_core::correction::DEFAULT_LAMBDA;
use dmpkit_core::dmp::{DEFAULT_ALPHA_X, DEFAULT_ALPHA_Z, DEFAULT_N_BASIS};
use dmpkit_core::rnn::{SweepConfig, SynthConfig, TrainConfig, DEFAULT_REFRACTORY};
use dmpkit_core::sim::{NoiseConfig, DEFAULT_DELAY, DEFAULT_DT, DEFAULT_DURATION};
use dmpkit_core::{FitConfig, Gains};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEED_ENV: &str = "DMPKIT_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Proposed,
    Legacy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub controller: ControllerSection,
    pub sim: SimSection,
    pub dmp: DmpSection,
    pub detector: DetectorSection,
}

/// Gains start from `preset`; any field given here replaces the preset value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub preset: Preset,
    pub k_p: Option<f64>,
    pub k_v: Option<f64>,
    pub k_c: Option<f64>,
    pub alpha_e: Option<f64>,
    pub feedforward: Option<bool>,
    pub k_t: Option<f64>,
    pub a_max: Option<f64>,
    pub velocity_cutoff: Option<f64>,
}

impl ControllerSection {
    pub fn gains(&self, preset: Preset) -> Gains {
        let base = match preset {
            Preset::Proposed => Gains::proposed(),
            Preset::Legacy => Gains::legacy(),
        };
        Gains {
            k_p: self.k_p.unwrap_or(base.k_p),
            k_v: self.k_v.unwrap_or(base.k_v),
            k_c: self.k_c.unwrap_or(base.k_c),
            alpha_e: self.alpha_e.unwrap_or(base.alpha_e),
            feedforward: self.feedforward.unwrap_or(base.feedforward),
            k_t: self.k_t.unwrap_or(base.k_t),
            a_max: self.a_max.unwrap_or(base.a_max),
            velocity_cutoff: self.velocity_cutoff.unwrap_or(base.velocity_cutoff),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    /// Seconds; must be a whole number of `dt`.
    pub delay: f64,
    pub noise: bool,
    pub pos_meas_std: f64,
    pub vel_proc_std: f64,
    pub kinematic_bias_std: f64,
    pub kinematic_bias_rate: f64,
    pub seed: Option<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            dt: DEFAULT_DT,
            duration: DEFAULT_DURATION,
            delay: DEFAULT_DELAY,
            noise: true,
            pos_meas_std: n.pos_meas_std,
            vel_proc_std: n.vel_proc_std,
            kinematic_bias_std: n.kinematic_bias_std,
            kinematic_bias_rate: n.kinematic_bias_rate,
            seed: None,
        }
    }
}

impl SimSection {
    pub fn noise(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            pos_meas_std: self.pos_meas_std,
            vel_proc_std: self.vel_proc_std,
            kinematic_bias_std: self.kinematic_bias_std,
            kinematic_bias_rate: self.kinematic_bias_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmpSection {
    pub n_basis: usize,
    pub alpha_z: f64,
    pub alpha_x: f64,
    /// Time constant for fitting; the demonstration's duration when absent.
    pub tau: Option<f64>,
    /// Rollout step, seconds.
    pub dt: f64,
    /// Smoothing weight used by `merge`.
    pub lambda: f64,
}

impl Default for DmpSection {
    fn default() -> Self {
        Self {
            n_basis: DEFAULT_N_BASIS,
            alpha_z: DEFAULT_ALPHA_Z,
            alpha_x: DEFAULT_ALPHA_X,
            tau: None,
            dt: DEFAULT_DT,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl DmpSection {
    pub fn fit_config(&self, tau: f64) -> FitConfig {
        FitConfig { tau, n_basis: self.n_basis, alpha_z: self.alpha_z, alpha_x: self.alpha_x }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub learning_rate: f64,
    pub steps: usize,
    pub init_scale: f64,
    pub search_ratio: usize,
    pub final_ratio: usize,
    pub max_window: usize,
    /// Seconds between reported detections.
    pub refractory: f64,
    pub seed: Option<u64>,
    pub synth: SynthSection,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SweepConfig::default();
        Self {
            learning_rate: t.learning_rate,
            steps: t.steps,
            init_scale: t.init_scale,
            search_ratio: s.search_ratio,
            final_ratio: s.final_ratio,
            max_window: s.max_window,
            refractory: DEFAULT_REFRACTORY,
            seed: None,
            synth: SynthSection::default(),
        }
    }
}

impl DetectorSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { learning_rate: self.learning_rate, steps: self.steps, init_scale: self.init_scale, seed }
    }

    pub fn sweep_config(&self, seed: u64) -> SweepConfig {
        SweepConfig {
            search_ratio: self.search_ratio,
            final_ratio: self.final_ratio,
            max_window: self.max_window,
            train: self.train_config(seed),
        }
    }
}

/// Synthetic recording generator settings used by `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_recordings: usize,
    pub n_samples: usize,
    pub n_channels: usize,
    pub dt: f64,
    pub noise_std: f64,
    pub noise_correlation: f64,
    pub max_drift: f64,
    pub transient_amplitude: f64,
    pub transient_len: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n_recordings: s.n_recordings,
            n_samples: s.n_samples,
            n_channels: s.n_channels,
            dt: s.dt,
            noise_std: s.noise_std,
            noise_correlation: s.noise_correlation,
            max_drift: s.max_drift,
            transient_amplitude: s.transient_amplitude,
            transient_len: s.transient_len,
        }
    }
}

impl SynthSection {
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_recordings: self.n_recordings,
            n_samples: self.n_samples,
            n_channels: self.n_channels,
            dt: self.dt,
            noise_std: self.noise_std,
            noise_correlation: self.noise_correlation,
            max_drift: self.max_drift,
            transient_amplitude: self.transient_amplitude,
            transient_len: self.transient_len,
            seed,
        }
    }
}

impl Config {
    /// `.json` files are parsed as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let load_err = |message: String| ConfigError::Load { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| load_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        for preset in [Preset::Proposed, Preset::Legacy] {
            if preset == self.controller.preset {
                self.controller
                    .gains(preset)
                    .validate()
                    .map_err(|m| ConfigError::Invalid(format!("controller: {m}")))?;
            }
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return invalid("sim.dt must be positive");
        }
        if !(s.duration >= 0.0 && s.duration.is_finite() && s.delay >= 0.0 && s.delay.is_finite()) {
            return invalid("sim.duration and sim.delay must be non-negative");
        }
        let d = &self.dmp;
        if d.n_basis == 0 || !(d.alpha_z > 0.0 && d.alpha_x > 0.0 && d.dt > 0.0) {
            return invalid("dmp.n_basis, alpha_z, alpha_x and dt must be positive");
        }
        if d.tau.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return invalid("dmp.tau must be positive");
        }
        if !(d.lambda >= 0.0 && d.lambda.is_finite()) {
            return invalid("dmp.lambda must be non-negative");
        }
        let r = &self.detector;
        if !(r.learning_rate >= 0.0 && r.learning_rate.is_finite() && r.init_scale > 0.0) {
            return invalid("detector.learning_rate and init_scale");
        }
        if r.search_ratio == 0 || r.final_ratio == 0 || r.max_window == 0 {
            return invalid("detector ratios and max_window must be positive");
        }
        if !(r.refractory >= 0.0 && r.refractory.is_finite()) {
            return invalid("detector.refractory must be non-negative");
        }
        Ok(())
    }
}

/// Command-line seed, then the config's own seed, then `DMPKIT_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, configured: Option<u64>) -> Result<u64, ConfigError> {
    if let Some(s) = flag.or(configured) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| ConfigError::Invalid(format!("{SEED_ENV}={v:?} is not a seed"))),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(ConfigError::Invalid(format!("{SEED_ENV}: {e}"))),
    }
}
