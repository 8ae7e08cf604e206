//! Dynamical movement primitives: a critically damped spring pulled toward a
//! goal, shaped by a phase-gated mixture of Gaussian basis functions.
//!
//! The transformation system is
//!
//! ```text
//! tau * dy = z
//! tau * dz = alpha_z * (beta_z * (g - y) - z) + f(x)
//! tau * dx = -alpha_x * x
//! f(x)     = (sum_i w_i psi_i(x) / sum_i psi_i(x)) * x * (g - y0)
//! ```
//!
//! with `beta_z = alpha_z / 4` so that the unforced system is critically
//! damped. Integration is explicit Euler at a fixed step.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::trajectory::{Trajectory, TrajectoryError};

pub const DEFAULT_ALPHA_Z: f64 = 25.0;
pub const DEFAULT_ALPHA_X: f64 = 1.0;
pub const DEFAULT_N_BASIS: usize = 30;

/// Basis sums below this are treated as "outside the support": the forcing is zero.
pub const BASIS_UNDERFLOW: f64 = 1e-12;

const WIDTH_FACTOR: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DmpError {
    #[error("phase must be positive and finite, got {0}")]
    Phase(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("at least {need} samples required, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("need at least one basis function")]
    NoBasis,
    #[error("inconsistent dimensions: {0}")]
    Shape(&'static str),
    #[error("centers must be strictly decreasing")]
    Centers,
    #[error("beta_z must equal alpha_z / 4 (alpha_z = {alpha_z}, beta_z = {beta_z})")]
    Damping { alpha_z: f64, beta_z: f64 },
    #[error("non-finite parameter in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

fn positive(name: &'static str, value: f64) -> Result<f64, DmpError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(DmpError::NonPositive { name, value })
    }
}

/// Hyper-parameters for learning a primitive from a demonstration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub tau: f64,
    pub n_basis: usize,
    pub alpha_z: f64,
    pub alpha_x: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tau: 1.0, n_basis: DEFAULT_N_BASIS, alpha_z: DEFAULT_ALPHA_Z, alpha_x: DEFAULT_ALPHA_X }
    }
}

impl FitConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self { tau, ..Self::default() }
    }
}

/// Plain, unchecked view of every parameter. Use [`Dmp::from_parts`] to
/// turn one back into a validated primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpParts {
    /// `[n_basis][dims]`
    pub weights: Vec<Vec<f64>>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub goal: Vec<f64>,
    pub start: Vec<f64>,
    pub tau: f64,
    pub alpha_z: f64,
    pub beta_z: f64,
    pub alpha_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dmp {
    weights: Vec<Vec<f64>>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    goal: Vec<f64>,
    start: Vec<f64>,
    tau: f64,
    alpha_z: f64,
    beta_z: f64,
    alpha_x: f64,
}

/// Runtime state of the uncoupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpState {
    pub x: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Forcing term value and whether the basis sum underflowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub value: Vec<f64>,
    pub underflow: bool,
}

/// Which channels had `g == y0` during a fit and got all-zero weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub degenerate_channels: Vec<usize>,
}

/// Centers spaced uniformly in time (log-spaced in phase) and widths set from
/// the gap to the next center.
pub fn basis_layout(n_basis: usize, alpha_x: f64) -> (Vec<f64>, Vec<f64>) {
    if n_basis == 1 {
        let c = vec![1.0];
        let w = vec![WIDTH_FACTOR * (1.0 - math::exp(-alpha_x))];
        return (c, w);
    }
    let last = (n_basis - 1) as f64;
    let centers: Vec<f64> = (0..n_basis).map(|i| math::exp(-alpha_x * i as f64 / last)).collect();
    let mut widths: Vec<f64> = centers.windows(2).map(|p| (p[1] - p[0]).abs() * WIDTH_FACTOR).collect();
    widths.push(*widths.last().unwrap());
    (centers, widths)
}

/// Velocity by central differences (one-sided at the ends) and acceleration by
/// the three-point second difference (shifted stencil at the ends).
pub fn finite_differences(demo: &Trajectory) -> Result<(Vec<f64>, Vec<f64>), DmpError> {
    let n = demo.len();
    if n < 3 {
        return Err(DmpError::TooShort { need: 3, got: n });
    }
    let d = demo.dims();
    let dt = demo.dt();
    let y = demo.as_flat();
    let at = |k: usize, c: usize| y[k * d + c];
    let mut vel = vec![0.0; n * d];
    let mut acc = vec![0.0; n * d];
    for c in 0..d {
        vel[c] = (at(1, c) - at(0, c)) / dt;
        vel[(n - 1) * d + c] = (at(n - 1, c) - at(n - 2, c)) / dt;
        for k in 1..n - 1 {
            vel[k * d + c] = (at(k + 1, c) - at(k - 1, c)) / (2.0 * dt);
            acc[k * d + c] = (at(k + 1, c) - 2.0 * at(k, c) + at(k - 1, c)) / (dt * dt);
        }
        acc[c] = (at(2, c) - 2.0 * at(1, c) + at(0, c)) / (dt * dt);
        acc[(n - 1) * d + c] = (at(n - 1, c) - 2.0 * at(n - 2, c) + at(n - 3, c)) / (dt * dt);
    }
    Ok((vel, acc))
}

/// The forcing that would make the spring reproduce `demo` exactly, one row per
/// sample: `tau^2 ydd - alpha_z (beta_z (g - y) - tau yd)` with `g` the final sample.
pub fn forcing_target(demo: &Trajectory, tau: f64, alpha_z: f64) -> Result<Vec<f64>, DmpError> {
    positive("tau", tau)?;
    positive("alpha_z", alpha_z)?;
    let beta_z = alpha_z / 4.0;
    let (vel, acc) = finite_differences(demo)?;
    let d = demo.dims();
    let goal = demo.last();
    let mut out = vec![0.0; demo.len() * d];
    for (k, row) in demo.rows().enumerate() {
        for c in 0..d {
            let i = k * d + c;
            out[i] = tau * tau * acc[i] - alpha_z * (beta_z * (goal[c] - row[c]) - tau * vel[i]);
        }
    }
    Ok(out)
}

impl Dmp {
    /// Primitive with all weights zero: a pure critically damped point attractor.
    pub fn point_attractor(start: &[f64], goal: &[f64], cfg: &FitConfig) -> Result<Self, DmpError> {
        if start.len() != goal.len() || start.is_empty() {
            return Err(DmpError::Shape("start and goal"));
        }
        if cfg.n_basis == 0 {
            return Err(DmpError::NoBasis);
        }
        positive("alpha_x", cfg.alpha_x)?;
        let (centers, widths) = basis_layout(cfg.n_basis, cfg.alpha_x);
        Self::from_parts(DmpParts {
            weights: vec![vec![0.0; start.len()]; cfg.n_basis],
            centers,
            widths,
            goal: goal.to_vec(),
            start: start.to_vec(),
            tau: cfg.tau,
            alpha_z: cfg.alpha_z,
            beta_z: cfg.alpha_z / 4.0,
            alpha_x: cfg.alpha_x,
        })
    }

    pub fn from_parts(p: DmpParts) -> Result<Self, DmpError> {
        positive("tau", p.tau)?;
        positive("alpha_z", p.alpha_z)?;
        positive("alpha_x", p.alpha_x)?;
        if p.beta_z != p.alpha_z / 4.0 {
            return Err(DmpError::Damping { alpha_z: p.alpha_z, beta_z: p.beta_z });
        }
        let nb = p.centers.len();
        if nb == 0 {
            return Err(DmpError::NoBasis);
        }
        if p.widths.len() != nb || p.weights.len() != nb {
            return Err(DmpError::Shape("basis count"));
        }
        let d = p.goal.len();
        if d == 0 || p.start.len() != d || p.weights.iter().any(|w| w.len() != d) {
            return Err(DmpError::Shape("channel count"));
        }
        for &s in &p.widths {
            positive("width", s)?;
        }
        if p.centers.iter().any(|c| !c.is_finite()) {
            return Err(DmpError::NonFinite("centers"));
        }
        if p.centers.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DmpError::Centers);
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&p.goal) || !finite(&p.start) {
            return Err(DmpError::NonFinite("goal/start"));
        }
        if !p.weights.iter().all(|w| finite(w)) {
            return Err(DmpError::NonFinite("weights"));
        }
        Ok(Self {
            weights: p.weights,
            centers: p.centers,
            widths: p.widths,
            goal: p.goal,
            start: p.start,
            tau: p.tau,
            alpha_z: p.alpha_z,
            beta_z: p.beta_z,
            alpha_x: p.alpha_x,
        })
    }

    pub fn to_parts(&self) -> DmpParts {
        DmpParts {
            weights: self.weights.clone(),
            centers: self.centers.clone(),
            widths: self.widths.clone(),
            goal: self.goal.clone(),
            start: self.start.clone(),
            tau: self.tau,
            alpha_z: self.alpha_z,
            beta_z: self.beta_z,
            alpha_x: self.alpha_x,
        }
    }

    /// Learns a primitive from `demo` by locally weighted regression of the
    /// target forcing onto each basis function.
    pub fn fit(demo: &Trajectory, cfg: &FitConfig) -> Result<Self, DmpError> {
        Self::fit_with_diagnostics(demo, cfg).map(|(dmp, _)| dmp)
    }

    pub fn fit_with_diagnostics(demo: &Trajectory, cfg: &FitConfig) -> Result<(Self, FitDiagnostics), DmpError> {
        let mut dmp = Self::point_attractor(demo.first(), demo.last(), cfg)?;
        let f_target = forcing_target(demo, cfg.tau, cfg.alpha_z)?;
        let d = demo.dims();
        let dt = demo.dt();

        let phases: Vec<f64> = (0..demo.len()).map(|k| math::exp(-cfg.alpha_x * k as f64 * dt / cfg.tau)).collect();
        let mut diag = FitDiagnostics::default();
        let mut psi = vec![0.0; dmp.n_basis()];
        // numerator[i][c], denominator[i][c]
        let mut num = vec![vec![0.0; d]; dmp.n_basis()];
        let mut den = vec![vec![0.0; d]; dmp.n_basis()];
        let span: Vec<f64> = (0..d).map(|c| dmp.goal[c] - dmp.start[c]).collect();
        for (k, &x) in phases.iter().enumerate() {
            dmp.activations_into(x, &mut psi);
            for (i, &p) in psi.iter().enumerate() {
                for c in 0..d {
                    let s = x * span[c];
                    num[i][c] += s * p * f_target[k * d + c];
                    den[i][c] += s * s * p;
                }
            }
        }
        for c in 0..d {
            if span[c] == 0.0 {
                diag.degenerate_channels.push(c);
                continue;
            }
            for i in 0..dmp.n_basis() {
                dmp.weights[i][c] = if den[i][c] > 0.0 { num[i][c] / den[i][c] } else { 0.0 };
            }
        }
        Ok((dmp, diag))
    }

    pub fn dims(&self) -> usize {
        self.goal.len()
    }

    pub fn n_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha_z(&self) -> f64 {
        self.alpha_z
    }

    pub fn beta_z(&self) -> f64 {
        self.beta_z
    }

    pub fn alpha_x(&self) -> f64 {
        self.alpha_x
    }

    pub fn set_goal(&mut self, goal: &[f64]) -> Result<(), DmpError> {
        if goal.len() != self.dims() {
            return Err(DmpError::Shape("goal"));
        }
        self.goal.copy_from_slice(goal);
        Ok(())
    }

    pub fn set_start(&mut self, start: &[f64]) -> Result<(), DmpError> {
        if start.len() != self.dims() {
            return Err(DmpError::Shape("start"));
        }
        self.start.copy_from_slice(start);
        Ok(())
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<(), DmpError> {
        self.tau = positive("tau", tau)?;
        Ok(())
    }

    pub fn basis_activations(&self, x: f64) -> Result<Vec<f64>, DmpError> {
        check_phase(x)?;
        let mut psi = vec![0.0; self.n_basis()];
        self.activations_into(x, &mut psi);
        Ok(psi)
    }

    fn activations_into(&self, x: f64, psi: &mut [f64]) {
        for ((p, &c), &s) in psi.iter_mut().zip(&self.centers).zip(&self.widths) {
            let dx = x - c;
            *p = math::exp(-dx * dx / (2.0 * s * s));
        }
    }

    pub fn forcing(&self, x: f64) -> Result<Forcing, DmpError> {
        check_phase(x)?;
        let mut value = vec![0.0; self.dims()];
        let underflow = self.forcing_into(x, &mut value);
        Ok(Forcing { value, underflow })
    }

    /// Writes `f(x)` into `out`; returns `true` when the basis sum underflowed
    /// and the forcing was set to zero.
    pub(crate) fn forcing_into(&self, x: f64, out: &mut [f64]) -> bool {
        out.fill(0.0);
        let mut total = 0.0;
        for (i, (&c, &s)) in self.centers.iter().zip(&self.widths).enumerate() {
            let dx = x - c;
            let p = math::exp(-dx * dx / (2.0 * s * s));
            total += p;
            for (o, w) in out.iter_mut().zip(&self.weights[i]) {
                *o += w * p;
            }
        }
        if total < BASIS_UNDERFLOW {
            out.fill(0.0);
            return true;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o = *o / total * x * (self.goal[c] - self.start[c]);
        }
        false
    }

    /// `(x = 1, y = y0, z = 0)`.
    pub fn initial_state(&self) -> DmpState {
        DmpState { x: 1.0, y: self.start.clone(), z: vec![0.0; self.dims()] }
    }

    /// One explicit Euler step of the uncoupled system.
    pub fn step(&self, state: &DmpState, dt: f64) -> DmpState {
        let mut next = state.clone();
        let mut f = vec![0.0; self.dims()];
        self.step_in_place(&mut next, dt, &mut f);
        next
    }

    /// In-place step; `scratch` must have `dims()` entries.
    pub fn step_in_place(&self, state: &mut DmpState, dt: f64, scratch: &mut [f64]) {
        self.forcing_into(state.x, scratch);
        let tau = self.tau;
        for c in 0..self.dims() {
            let z = state.z[c];
            let dz = (self.alpha_z * (self.beta_z * (self.goal[c] - state.y[c]) - z) + scratch[c]) / tau;
            let dy = z / tau;
            state.z[c] = z + dz * dt;
            state.y[c] += dy * dt;
        }
        let dx = -self.alpha_x * state.x / tau;
        state.x += dx * dt;
    }

    /// Infinite iterator of states starting at [`Dmp::initial_state`].
    pub fn states(&self, dt: f64) -> States<'_> {
        States { dmp: self, state: self.initial_state(), dt, scratch: vec![0.0; self.dims()] }
    }

    /// Integrates from the initial state for `round(duration / dt)` steps and
    /// returns every position, including the start.
    pub fn rollout(&self, duration: f64, dt: f64) -> Result<Trajectory, DmpError> {
        positive("dt", dt)?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(DmpError::NonPositive { name: "duration", value: duration });
        }
        let steps = math::round(duration / dt) as usize;
        let mut data = Vec::with_capacity((steps + 1) * self.dims());
        for s in self.states(dt).take(steps + 1) {
            data.extend_from_slice(&s.y);
        }
        Ok(Trajectory::from_flat(data, self.dims(), dt)?)
    }
}

pub struct States<'a> {
    dmp: &'a Dmp,
    state: DmpState,
    dt: f64,
    scratch: Vec<f64>,
}

impl Iterator for States<'_> {
    type Item = DmpState;

    fn next(&mut self) -> Option<DmpState> {
        let out = self.state.clone();
        self.dmp.step_in_place(&mut self.state, self.dt, &mut self.scratch);
        Some(out)
    }
}

fn check_phase(x: f64) -> Result<(), DmpError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(DmpError::Phase(x))
    }
}
