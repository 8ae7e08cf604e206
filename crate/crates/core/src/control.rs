//! Temporally coupled execution of a primitive and the tracking controllers
//! that drive a plant along it.
//!
//! The coupled reference `y_c` evolves like the primitive, but with an
//! adaptive time constant `tau_a = tau * (1 + k_c |e|^2)` where `e` is a
//! low-pass filtered tracking error. A large error therefore slows the
//! reference down. The proposed controller is a two-degree-of-freedom law
//!
//! ```text
//! acc = k_p (y_c - y_a) + k_v (yd_c - yd_a) + ydd_c
//! ```
//!
//! and the legacy controller is the same law without the feedforward term,
//! run with high gains.

use alloc::vec;
use alloc::vec::Vec;

use crate::dmp::Dmp;
use crate::math;

/// Controller and coupling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    /// Position gain, 1/s^2.
    pub k_p: f64,
    /// Velocity gain, 1/s.
    pub k_v: f64,
    /// Temporal coupling gain, 1/length^2.
    pub k_c: f64,
    /// Error filter rate, 1/s.
    pub alpha_e: f64,
    pub feedforward: bool,
    /// Gain of the spatial coupling term `C_t = k_t e`; zero disables it.
    pub k_t: f64,
    /// Acceleration command saturation (infinite for none).
    pub a_max: f64,
    /// Cutoff of the first-order filter on the measured velocity, rad/s
    /// (infinite for none).
    pub velocity_cutoff: f64,
}

impl Gains {
    /// Two-degree-of-freedom controller with moderate gains.
    pub fn proposed() -> Self {
        Self {
            k_p: 25.0,
            k_v: 10.0,
            k_c: 1000.0,
            alpha_e: 50.0,
            feedforward: true,
            k_t: 0.0,
            a_max: 10.0,
            velocity_cutoff: 50.0,
        }
    }

    /// High-gain PD feedback without feedforward.
    pub fn legacy() -> Self {
        Self {
            k_p: 1000.0,
            k_v: 125.0,
            feedforward: false,
            a_max: f64::INFINITY,
            velocity_cutoff: f64::INFINITY,
            ..Self::proposed()
        }
    }

    /// Legacy structure with the proposed (moderate) gains.
    pub fn legacy_low_gain() -> Self {
        Self { k_p: 25.0, k_v: 10.0, ..Self::legacy() }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let pos = |v: f64| v > 0.0 && !v.is_nan();
        if !(pos(self.k_p) && self.k_p.is_finite()) {
            return Err("k_p must be positive");
        }
        if !(pos(self.k_v) && self.k_v.is_finite()) {
            return Err("k_v must be positive");
        }
        if !(pos(self.alpha_e) && self.alpha_e.is_finite()) {
            return Err("alpha_e must be positive");
        }
        if !(self.k_c >= 0.0 && self.k_c.is_finite()) {
            return Err("k_c must be non-negative");
        }
        if !self.k_t.is_finite() {
            return Err("k_t must be finite");
        }
        if !pos(self.a_max) {
            return Err("a_max must be positive");
        }
        if !pos(self.velocity_cutoff) {
            return Err("velocity_cutoff must be positive");
        }
        Ok(())
    }
}

impl Default for Gains {
    fn default() -> Self {
        Self::proposed()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub x: f64,
    pub z: Vec<f64>,
    pub y_c: Vec<f64>,
    pub e: Vec<f64>,
    pub tau_a: f64,
}

impl CoupledState {
    pub fn start(dmp: &Dmp) -> Self {
        let d = dmp.dims();
        Self { x: 1.0, z: vec![0.0; d], y_c: dmp.start().to_vec(), e: vec![0.0; d], tau_a: dmp.tau() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Commanded acceleration after saturation.
    pub acc: Vec<f64>,
    pub y_c_dot: Vec<f64>,
    pub y_c_ddot: Vec<f64>,
    pub saturated: bool,
}

/// Advances the coupled reference one step and computes the acceleration
/// command for measured position `y_a` and (filtered) velocity `y_a_dot`.
pub fn coupled_step(
    dmp: &Dmp,
    st: &CoupledState,
    y_a: &[f64],
    y_a_dot: &[f64],
    gains: &Gains,
    dt: f64,
) -> (CoupledState, ControlOutput) {
    let d = dmp.dims();
    let tau = dmp.tau();
    let mut next = st.clone();

    let e_dot: Vec<f64> = (0..d).map(|c| gains.alpha_e * (y_a[c] - st.y_c[c] - st.e[c])).collect();
    for c in 0..d {
        next.e[c] = st.e[c] + e_dot[c] * dt;
    }
    let e_sq = math::norm_sq(&next.e);
    let tau_a = tau * (1.0 + gains.k_c * e_sq);
    next.tau_a = tau_a;
    let e_dot_e = math::dot(&next.e, &e_dot);

    let mut f = vec![0.0; d];
    dmp.forcing_into(st.x, &mut f);

    let mut out = ControlOutput { acc: vec![0.0; d], y_c_dot: vec![0.0; d], y_c_ddot: vec![0.0; d], saturated: false };
    for c in 0..d {
        let z = st.z[c];
        let coupling = gains.k_t * next.e[c];
        let z_dot = (dmp.alpha_z() * (dmp.beta_z() * (dmp.goal()[c] - st.y_c[c]) - z) + f[c] + coupling) / tau_a;
        let y_c_dot = z / tau_a;
        let y_c_ddot = (z_dot * tau_a - 2.0 * tau * gains.k_c * z * e_dot_e) / (tau_a * tau_a);

        let mut acc = gains.k_p * (st.y_c[c] - y_a[c]) + gains.k_v * (y_c_dot - y_a_dot[c]);
        if gains.feedforward {
            acc += y_c_ddot;
        }
        if acc > gains.a_max {
            acc = gains.a_max;
            out.saturated = true;
        } else if acc < -gains.a_max {
            acc = -gains.a_max;
            out.saturated = true;
        }
        out.acc[c] = acc;
        out.y_c_dot[c] = y_c_dot;
        out.y_c_ddot[c] = y_c_ddot;

        next.z[c] = z + z_dot * dt;
        next.y_c[c] = st.y_c[c] + y_c_dot * dt;
    }
    let x_dot = -dmp.alpha_x() * st.x / tau_a;
    next.x = st.x + x_dot * dt;
    (next, out)
}

/// First-order low-pass, `prev + (1 - exp(-cutoff dt)) (raw - prev)`.
pub fn velocity_filter(prev: &[f64], raw: &[f64], cutoff: f64, dt: f64) -> Vec<f64> {
    let k = if cutoff.is_infinite() { 1.0 } else { 1.0 - math::exp(-cutoff * dt) };
    prev.iter().zip(raw).map(|(p, r)| p + k * (r - p)).collect()
}

/// Owns the coupled state and the velocity filter of one execution.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    dmp: &'a Dmp,
    gains: Gains,
    state: CoupledState,
    velocity: Vec<f64>,
}

impl<'a> Controller<'a> {
    pub fn new(dmp: &'a Dmp, gains: Gains) -> Self {
        Self { dmp, gains, state: CoupledState::start(dmp), velocity: vec![0.0; dmp.dims()] }
    }

    pub fn state(&self) -> &CoupledState {
        &self.state
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    /// Filtered velocity estimate used in the last step.
    pub fn velocity_estimate(&self) -> &[f64] {
        &self.velocity
    }

    /// Filters `y_a_dot_raw`, advances the coupled system and returns the command.
    pub fn step(&mut self, y_a: &[f64], y_a_dot_raw: &[f64], dt: f64) -> ControlOutput {
        self.velocity = velocity_filter(&self.velocity, y_a_dot_raw, self.gains.velocity_cutoff, dt);
        let (next, out) = coupled_step(self.dmp, &self.state, y_a, &self.velocity, &self.gains, dt);
        self.state = next;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub re: f64,
    pub im: f64,
}

/// Roots of `s^2 + k_v s + k_p`, the tracking-error dynamics of PD feedback
/// with feedforward around a double integrator.
pub fn closed_loop_poles(k_p: f64, k_v: f64) -> [Pole; 2] {
    let disc = k_v * k_v - 4.0 * k_p;
    if disc >= 0.0 {
        let r = math::sqrt(disc);
        [Pole { re: (-k_v + r) / 2.0, im: 0.0 }, Pole { re: (-k_v - r) / 2.0, im: 0.0 }]
    } else {
        let i = math::sqrt(-disc) / 2.0;
        [Pole { re: -k_v / 2.0, im: i }, Pole { re: -k_v / 2.0, im: -i }]
    }
}

/// `|L(j w)|` for `L(s) = (k_v s + k_p) / s^2`.
fn loop_gain(k_p: f64, k_v: f64, w: f64) -> f64 {
    math::sqrt(k_v * k_v * w * w + k_p * k_p) / (w * w)
}

/// Gain crossover of the PD loop around a double integrator, found by bisection.
pub fn crossover_frequency(k_p: f64, k_v: f64) -> f64 {
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while loop_gain(k_p, k_v, hi) > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if loop_gain(k_p, k_v, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Phase margin in radians: `pi + arg L(j w_c)`.
pub fn phase_margin(k_p: f64, k_v: f64) -> f64 {
    let w = crossover_frequency(k_p, k_v);
    math::atan2(k_v * w, k_p)
}

/// Largest pure loop delay, in seconds, that keeps the loop stable.
pub fn delay_margin(k_p: f64, k_v: f64) -> f64 {
    let w = crossover_frequency(k_p, k_v);
    math::atan2(k_v * w, k_p) / w
}
