//! Fixed-rate simulation of a double-integrator plant tracking a coupled
//! primitive, with measurement noise, velocity process noise, a slowly
//! varying kinematic bias, transport delay and scripted perturbations.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::control::{Controller, Gains};
use crate::dmp::{Dmp, DmpError, FitConfig};
use crate::math;
use crate::trajectory::Trajectory;

pub const DEFAULT_DT: f64 = 0.004;
pub const DEFAULT_DURATION: f64 = 10.0;
pub const DEFAULT_DELAY: f64 = 0.012;
/// Distance between plant and reference regarded as "recovered".
pub const RECOVERY_TOLERANCE: f64 = 0.005;
/// How long the plant must stay within [`RECOVERY_TOLERANCE`].
pub const RECOVERY_HOLD: f64 = 0.2;
/// Phase value used to time an execution.
pub const PHASE_THRESHOLD: f64 = 0.01;
/// Tracking error, in multiples of the reference range, that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Runs are cut short once the error exceeds this multiple of the range.
const ABORT_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("delay {delay} s is not an integer multiple of dt = {dt} s")]
    DelayNotMultiple { delay: f64, dt: f64 },
    #[error("invalid scenario: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Dmp(#[from] DmpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// White position measurement noise, length.
    pub pos_meas_std: f64,
    /// White velocity process noise per step, length/s.
    pub vel_proc_std: f64,
    /// Stationary standard deviation of the kinematic bias, length.
    pub kinematic_bias_std: f64,
    /// Inverse correlation time of the kinematic bias, 1/s.
    pub kinematic_bias_rate: f64,
    pub seed: u64,
}

impl NoiseConfig {
    /// 1 mm measurement noise, 1 mm/s process noise, 1 mm bias.
    pub fn realistic(seed: u64) -> Self {
        Self { pos_meas_std: 1e-3, vel_proc_std: 1e-3, kinematic_bias_std: 1e-3, kinematic_bias_rate: 0.1, seed }
    }

    pub fn ideal() -> Self {
        Self { pos_meas_std: 0.0, vel_proc_std: 0.0, kinematic_bias_std: 0.0, kinematic_bias_rate: 0.1, seed: 0 }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.pos_meas_std) && ok(self.vel_proc_std) && ok(self.kinematic_bias_std)) {
            return Err(SimError::Config("noise standard deviations must be non-negative"));
        }
        if !(self.kinematic_bias_rate > 0.0 && self.kinematic_bias_rate.is_finite()) {
            return Err(SimError::Config("kinematic bias rate must be positive"));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::realistic(0)
    }
}

/// Offset applied to the plant position during a Move perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum OffsetProfile {
    /// `amplitude * sin(pi s)` in one channel, `s` running from 0 to 1 over the window.
    HalfSine { amplitude: f64, channel: usize },
    /// Offsets sampled from the window start; held at the last sample.
    Sampled(Trajectory),
}

impl OffsetProfile {
    pub fn half_sine() -> Self {
        Self::HalfSine { amplitude: 0.05, channel: 0 }
    }

    /// Offset and its time derivative at `elapsed` seconds into a window of `length` seconds.
    fn eval(&self, elapsed: f64, length: f64, pos: &mut [f64], vel: &mut [f64]) {
        pos.fill(0.0);
        vel.fill(0.0);
        match self {
            Self::HalfSine { amplitude, channel } => {
                let s = (elapsed / length).clamp(0.0, 1.0);
                pos[*channel] = amplitude * math::sin(PI * s);
                if elapsed < length {
                    vel[*channel] = amplitude * PI / length * math::cos(PI * s);
                }
            }
            Self::Sampled(offsets) => {
                let k = math::round(elapsed / offsets.dt()).max(0.0) as usize;
                let k = k.min(offsets.len() - 1);
                pos.copy_from_slice(offsets.sample(k));
                if k + 1 < offsets.len() {
                    for (c, v) in vel.iter_mut().enumerate() {
                        *v = (offsets.sample(k + 1)[c] - offsets.sample(k)[c]) / offsets.dt();
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// Plant held still over `[t_start, t_end)`.
    Stop {
        t_start: f64,
        t_end: f64,
    },
    /// Plant position overridden by `anchor + offset(t)` over `[t_start, t_end)`,
    /// where `anchor` is the position at `t_start`.
    Move {
        t_start: f64,
        t_end: f64,
        profile: OffsetProfile,
    },
}

impl Perturbation {
    pub fn stop() -> Self {
        Self::Stop { t_start: 2.0, t_end: 3.0 }
    }

    pub fn push() -> Self {
        Self::Move { t_start: 2.0, t_end: 3.0, profile: OffsetProfile::half_sine() }
    }

    pub fn window(&self) -> Option<(f64, f64)> {
        match *self {
            Self::None => None,
            Self::Stop { t_start, t_end } | Self::Move { t_start, t_end, .. } => Some((t_start, t_end)),
        }
    }

    fn validate(&self, dims: usize) -> Result<(), SimError> {
        if let Some((a, b)) = self.window() {
            if !(a < b && a.is_finite() && b.is_finite()) {
                return Err(SimError::Config("perturbation must satisfy t_start < t_end"));
            }
        }
        match self {
            Self::Move { profile: OffsetProfile::HalfSine { channel, amplitude }, .. } => {
                if *channel >= dims || !amplitude.is_finite() {
                    return Err(SimError::Config("move channel out of range"));
                }
            }
            Self::Move { profile: OffsetProfile::Sampled(t), .. } if t.dims() != dims => {
                return Err(SimError::Config("move profile channel count"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gains: Gains,
    pub noise: NoiseConfig,
    pub perturbation: Perturbation,
    /// Transport delay between plant and controller, seconds.
    pub delay: f64,
    pub dt: f64,
    pub duration: f64,
}

impl Scenario {
    pub fn new(gains: Gains, noise: NoiseConfig, perturbation: Perturbation) -> Self {
        Self { gains, noise, perturbation, delay: DEFAULT_DELAY, dt: DEFAULT_DT, duration: DEFAULT_DURATION }
    }

    /// No noise and no delay.
    pub fn ideal(gains: Gains, perturbation: Perturbation) -> Self {
        Self { delay: 0.0, ..Self::new(gains, NoiseConfig::ideal(), perturbation) }
    }

    /// Delay expressed in whole samples.
    pub fn delay_steps(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config("dt must be positive"));
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(SimError::Config("delay must be non-negative"));
        }
        let ratio = self.delay / self.dt;
        let steps = math::round(ratio);
        if math::abs(ratio - steps) > 1e-9 * ratio.max(1.0) {
            return Err(SimError::DelayNotMultiple { delay: self.delay, dt: self.dt });
        }
        Ok(steps as usize)
    }
}

/// One logged control period.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// Uncoupled reference.
    pub y_u: Vec<f64>,
    /// Coupled reference.
    pub y_c: Vec<f64>,
    /// True plant position.
    pub y_a: Vec<f64>,
    /// Position measurement taken at this step.
    pub measured: Vec<f64>,
    /// Delayed measurement the controller acted on at this step.
    pub seen: Vec<f64>,
    /// Acceleration command.
    pub acc: Vec<f64>,
    pub tau_a: f64,
    pub e: Vec<f64>,
    /// Coupled phase.
    pub x_c: f64,
    /// Uncoupled phase.
    pub x_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Largest `|acc|` over channels and time.
    pub max_accel: f64,
    /// `|y_a(end) - g|`.
    pub final_goal_error: f64,
    /// Seconds from the end of the perturbation until the plant stays within
    /// 5 mm of the coupled reference for 0.2 s.
    pub recovery_time: Option<f64>,
    /// Time for the coupled phase to reach the threshold over the same for the
    /// uncoupled phase.
    pub slowdown_ratio: f64,
    /// Largest `|y_a - y_c|`.
    pub max_tracking_error: f64,
    /// Largest `|y_a - y_u|`.
    pub max_reference_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub dims: usize,
    pub dt: f64,
    pub log: Vec<LogRow>,
    /// Largest channel range of the uncoupled reference.
    pub range: f64,
    /// Tracking error exceeded [`DIVERGENCE_FACTOR`] times the range.
    pub diverged: bool,
    /// The run was cut short before `duration`.
    pub aborted: bool,
    pub metrics: Metrics,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Simulates the plant under `scenario.gains` while it executes `dmp`.
pub fn run_scenario(dmp: &Dmp, scenario: &Scenario) -> Result<ScenarioResult, SimError> {
    scenario.gains.validate().map_err(SimError::Config)?;
    scenario.noise.validate()?;
    let d = dmp.dims();
    scenario.perturbation.validate(d)?;
    let delay_steps = scenario.delay_steps()?;
    if !(scenario.duration >= 0.0 && scenario.duration.is_finite()) {
        return Err(SimError::Config("duration must be non-negative"));
    }
    let dt = scenario.dt;
    let steps = math::round(scenario.duration / dt) as usize;
    let noise = &scenario.noise;

    let reference: Vec<_> = dmp.states(dt).take(steps + 1).collect();
    let range = {
        let flat: Vec<f64> = reference.iter().flat_map(|s| s.y.iter().copied()).collect();
        Trajectory::from_flat(flat, d, dt).map(|t| t.range()).unwrap_or(0.0)
    };
    let bound = if range > 0.0 { range } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let decay = math::exp(-noise.kinematic_bias_rate * dt);
    let drive = noise.kinematic_bias_std * math::sqrt(1.0 - decay * decay);
    let mut bias: Vec<f64> = (0..d).map(|_| noise.kinematic_bias_std * normal()).collect();

    let mut controller = Controller::new(dmp, scenario.gains);
    let mut y = dmp.start().to_vec();
    let mut v = vec![0.0; d];
    let mut measurements: VecDeque<Vec<f64>> = VecDeque::with_capacity(delay_steps + 2);
    let mut previous: Option<Vec<f64>> = None;
    let mut anchor: Option<Vec<f64>> = None;
    let mut offset = vec![0.0; d];
    let mut offset_vel = vec![0.0; d];
    let mut raw_vel = vec![0.0; d];

    let mut log = Vec::with_capacity(steps + 1);
    let mut diverged = false;
    let mut aborted = false;

    for (n, reference_state) in reference.iter().enumerate() {
        let t = n as f64 * dt;

        let mut meas = vec![0.0; d];
        for c in 0..d {
            meas[c] = y[c] + noise.pos_meas_std * normal() + bias[c];
        }
        measurements.push_back(meas.clone());
        if measurements.len() > delay_steps + 1 {
            measurements.pop_front();
        }
        // Oldest entry is the measurement from step n - delay (or step 0 early on).
        let seen = measurements.front().unwrap().clone();
        match &previous {
            Some(p) => {
                for c in 0..d {
                    raw_vel[c] = (seen[c] - p[c]) / dt;
                }
            }
            None => raw_vel.fill(0.0),
        }
        previous = Some(seen.clone());
        let x_c = controller.state().x;
        let y_c = controller.state().y_c.clone();
        let out = controller.step(&seen, &raw_vel, dt);
        let st = controller.state();

        let err = dist(&y, &y_c);
        if err > DIVERGENCE_FACTOR * bound {
            diverged = true;
        }
        log.push(LogRow {
            t,
            y_u: reference_state.y.clone(),
            y_c,
            y_a: y.clone(),
            measured: meas,
            seen,
            acc: out.acc.clone(),
            tau_a: st.tau_a,
            e: st.e.clone(),
            x_c,
            x_u: reference_state.x,
        });
        if !(err <= ABORT_FACTOR * bound) || out.acc.iter().any(|a| !a.is_finite()) {
            aborted = n < steps;
            diverged = true;
            break;
        }

        // Plant update from t to t + dt.
        let active = scenario.perturbation.window().filter(|&(a, b)| t >= a && t < b);
        let process: Vec<f64> = (0..d).map(|_| noise.vel_proc_std * normal()).collect();
        match (&scenario.perturbation, active) {
            (Perturbation::Stop { .. }, Some(_)) => v.fill(0.0),
            (Perturbation::Move { profile, .. }, Some((a, b))) => {
                let base = anchor.get_or_insert_with(|| y.clone());
                profile.eval(t + dt - a, b - a, &mut offset, &mut offset_vel);
                for c in 0..d {
                    y[c] = base[c] + offset[c];
                    v[c] = offset_vel[c];
                }
            }
            _ => {
                for c in 0..d {
                    v[c] += out.acc[c] * dt + process[c];
                    y[c] += v[c] * dt;
                }
            }
        }
        for b in bias.iter_mut() {
            *b = decay * *b + drive * normal();
        }
    }

    let metrics = compute_metrics(&log, &scenario.perturbation, dmp.goal(), dt);
    Ok(ScenarioResult { dims: d, dt, log, range, diverged, aborted, metrics })
}

fn crossing_time(log: &[LogRow], threshold: f64, phase: impl Fn(&LogRow) -> f64) -> Option<f64> {
    log.iter().find(|r| phase(r) <= threshold).map(|r| r.t)
}

/// Summary statistics of a logged run.
pub fn compute_metrics(log: &[LogRow], perturbation: &Perturbation, goal: &[f64], dt: f64) -> Metrics {
    let max_accel = log.iter().flat_map(|r| r.acc.iter()).fold(0.0f64, |m, a| m.max(a.abs()));
    let final_goal_error = log.last().map(|r| dist(&r.y_a, goal)).unwrap_or(f64::NAN);
    let max_tracking_error = log.iter().map(|r| dist(&r.y_a, &r.y_c)).fold(0.0, f64::max);
    let max_reference_deviation = log.iter().map(|r| dist(&r.y_a, &r.y_u)).fold(0.0, f64::max);

    let recovery_time = perturbation.window().and_then(|(_, end)| {
        let hold = math::round(RECOVERY_HOLD / dt) as usize;
        let after: Vec<&LogRow> = log.iter().filter(|r| r.t >= end - 1e-9).collect();
        (0..after.len()).find_map(|i| {
            let window = after.get(i..=i + hold)?;
            window.iter().all(|r| dist(&r.y_a, &r.y_c) < RECOVERY_TOLERANCE).then(|| after[i].t - end)
        })
    });

    // When the coupled phase never reaches the threshold inside the log, time
    // both phases to the smallest coupled value instead.
    let min_xc = log.iter().map(|r| r.x_c).fold(f64::INFINITY, f64::min);
    let threshold = PHASE_THRESHOLD.max(min_xc);
    let slowdown_ratio = match (crossing_time(log, threshold, |r| r.x_c), crossing_time(log, threshold, |r| r.x_u)) {
        (Some(tc), Some(tu)) if tu > 0.0 => tc / tu,
        _ => f64::NAN,
    };

    Metrics { max_accel, final_goal_error, recovery_time, slowdown_ratio, max_tracking_error, max_reference_deviation }
}

/// Planar reach with a sideways bump: 0.4 m by 0.3 m over 3 s, sampled at 250 Hz.
pub fn reference_demo() -> Trajectory {
    let duration = 3.0;
    let n = math::round(duration / DEFAULT_DT) as usize + 1;
    Trajectory::from_fn(n, 2, DEFAULT_DT, |t, r| {
        let s = t / duration;
        let mj = 10.0 * math::powi(s, 3) - 15.0 * math::powi(s, 4) + 6.0 * math::powi(s, 5);
        r[0] = 0.4 * mj;
        r[1] = 0.3 * mj + 0.08 * math::powi(math::sin(PI * s), 2);
    })
    .expect("reference demo is well formed")
}

/// Primitive fitted to [`reference_demo`] with `tau` equal to its duration.
pub fn reference_dmp() -> Dmp {
    let demo = reference_demo();
    Dmp::fit(&demo, &FitConfig::with_tau(demo.duration())).expect("reference demo fits")
}
