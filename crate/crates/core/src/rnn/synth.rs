use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::Recording;
use super::RnnError;
use crate::math;
use crate::trajectory::Trajectory;

/// Synthetic joint-torque logs: a small offset, slow drift, colored
/// noise and, in each recording, one damped oscillatory transient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_recordings: usize,
    pub n_samples: usize,
    pub n_channels: usize,
    pub dt: f64,
    /// Stationary standard deviation of the colored noise.
    pub noise_std: f64,
    /// AR(1) coefficient of the noise.
    pub noise_correlation: f64,
    /// Largest end-to-end drift of a channel, in units of `noise_std`.
    pub max_drift: f64,
    /// Peak transient amplitude before the per-channel gain in `[0.5, 1]`.
    pub transient_amplitude: f64,
    /// Samples over which the transient rings down.
    pub transient_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_recordings: 50,
            n_samples: 2000,
            n_channels: 7,
            dt: 0.004,
            noise_std: 0.05,
            noise_correlation: 0.8,
            max_drift: 3.0,
            transient_amplitude: 0.5,
            transient_len: 10,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), RnnError> {
        if self.n_channels == 0 || self.n_samples < 4 * self.transient_len.max(1) {
            return Err(RnnError::Config("recording too short for a transient"));
        }
        if !(self.dt > 0.0 && self.noise_std >= 0.0 && self.noise_correlation.abs() < 1.0) {
            return Err(RnnError::Config("dt, noise_std or noise_correlation"));
        }
        Ok(())
    }
}

/// Transient shape at offset `k` from its peak.
pub fn transient_shape(k: usize, len: usize) -> f64 {
    if k >= len {
        return 0.0;
    }
    let s = k as f64 / len as f64;
    math::exp(-3.0 * s) * math::cos(2.0 * core::f64::consts::PI * 2.0 * s)
}

struct Generator {
    rng: ChaCha8Rng,
    cfg: SynthConfig,
}

impl Generator {
    fn new(cfg: SynthConfig) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(cfg.seed), cfg }
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn recording(&mut self, n_samples: usize, with_transient: bool) -> Recording {
        let cfg = self.cfg;
        let d = cfg.n_channels;
        let mut data = vec![0.0; n_samples * d];
        let innovation = cfg.noise_std * math::sqrt(1.0 - cfg.noise_correlation * cfg.noise_correlation);
        for c in 0..d {
            let offset = cfg.noise_std * self.normal();
            let drift = cfg.max_drift * cfg.noise_std * self.rng.random_range(-1.0..=1.0);
            let mut colored = cfg.noise_std * self.normal();
            for k in 0..n_samples {
                let ramp = drift * k as f64 / n_samples as f64;
                data[k * d + c] = offset + ramp + colored;
                colored = cfg.noise_correlation * colored + innovation * self.normal();
            }
        }
        let mut peaks = Vec::new();
        if with_transient {
            let lo = n_samples / 2;
            let hi = n_samples - 2 * cfg.transient_len;
            let peak = self.rng.random_range(lo..=hi);
            for c in 0..d {
                let gain = cfg.transient_amplitude * self.rng.random_range(0.5..=1.0);
                for k in 0..cfg.transient_len {
                    data[(peak + k) * d + c] += gain * transient_shape(k, cfg.transient_len);
                }
            }
            peaks.push(peak);
        }
        let torques = Trajectory::from_flat(data, d, cfg.dt).expect("generated samples are finite");
        Recording { torques, peaks }
    }
}

/// `n_recordings` logs, each with one transient whose peak lies in the second
/// half. Deterministic in `seed`.
pub fn synth_transients(cfg: &SynthConfig) -> Result<Vec<Recording>, RnnError> {
    cfg.validate()?;
    let mut g = Generator::new(*cfg);
    Ok((0..cfg.n_recordings).map(|_| g.recording(cfg.n_samples, true)).collect())
}

/// A single transient-free log of `n_samples` with the same baseline
/// statistics as [`synth_transients`] for the same seed.
pub fn synth_quiet(cfg: &SynthConfig, n_samples: usize) -> Result<Trajectory, RnnError> {
    cfg.validate()?;
    let mut g = Generator::new(*cfg);
    Ok(g.recording(n_samples, false).torques)
}
