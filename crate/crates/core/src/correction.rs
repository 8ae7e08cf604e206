//! Merging a deficient trajectory with a corrective demonstration.
//!
//! The deficient trajectory `y_d` is cut at the sample closest to the first
//! retained corrective sample. The kept prefix `y_dr` is then smoothed into
//! `y_m` by
//!
//! ```text
//! minimize  |y_dr - y_m|^2 + lambda |D2 y_m|^2
//! s.t.      y_m[M-1] = y_cr[0]
//!           y_m[M-1] - y_m[M-2] = y_cr[1] - y_cr[0]
//! ```
//!
//! where `D2` is the `(M-2) x M` interior second-difference operator. The two
//! constraints pin the last two samples, so the KKT system is solved by
//! eliminating them and factoring the remaining pentadiagonal block.

use alloc::vec;

use thiserror::Error;

use crate::dmp::{Dmp, DmpError, FitConfig};
use crate::linalg::SymBand;
use crate::trajectory::{Trajectory, TrajectoryError};

pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrectionError {
    #[error("retained prefix needs at least 3 samples, got {0}")]
    PrefixTooShort(usize),
    #[error("corrective trajectory needs at least 2 samples, got {0}")]
    CorrectiveTooShort(usize),
    #[error("smoothing weight must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error("smoothing system is not positive definite")]
    Singular,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Fit(#[from] DmpError),
}

/// Deficient trajectory, the retained part of the correction, and the
/// smoothing weight.
#[derive(Debug, Clone)]
pub struct CorrectionInput {
    deficient: Trajectory,
    corrective: Trajectory,
    lambda: f64,
}

impl CorrectionInput {
    pub fn new(deficient: Trajectory, corrective: Trajectory, lambda: f64) -> Result<Self, CorrectionError> {
        deficient.check_compatible(&corrective)?;
        if corrective.len() < 2 {
            return Err(CorrectionError::CorrectiveTooShort(corrective.len()));
        }
        check_lambda(lambda)?;
        Ok(Self { deficient, corrective, lambda })
    }

    pub fn deficient(&self) -> &Trajectory {
        &self.deficient
    }

    pub fn corrective(&self) -> &Trajectory {
        &self.corrective
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    /// `y_m` followed by the corrective trajectory minus its first sample.
    pub merged: Trajectory,
    /// Zero-based index into `y_d` of the last retained sample.
    pub split_index: usize,
    pub modified_prefix: Trajectory,
}

fn check_lambda(lambda: f64) -> Result<(), CorrectionError> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(CorrectionError::Lambda(lambda))
    }
}

/// Zero-based index of the sample of `y_d` closest (Euclidean) to `target`.
/// Ties go to the smallest index.
pub fn find_split(y_d: &Trajectory, target: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, row) in y_d.rows().enumerate() {
        let d: f64 = row.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// `|D2 y|^2` summed over channels.
pub fn second_difference_energy(y: &Trajectory) -> f64 {
    let d = y.dims();
    let v = y.as_flat();
    let mut e = 0.0;
    for k in 0..y.len().saturating_sub(2) {
        for c in 0..d {
            let s = v[k * d + c] - 2.0 * v[(k + 1) * d + c] + v[(k + 2) * d + c];
            e += s * s;
        }
    }
    e
}

/// Objective value of the smoothing problem for a candidate `y_m`.
pub fn smoothing_objective(y_dr: &Trajectory, y_m: &Trajectory, lambda: f64) -> f64 {
    let fit: f64 = y_dr.as_flat().iter().zip(y_m.as_flat()).map(|(a, b)| (a - b) * (a - b)).sum();
    fit + lambda * second_difference_energy(y_m)
}

/// Smooths the retained prefix so that it lands on the corrective
/// trajectory's first sample with the corrective trajectory's first velocity.
pub fn smooth_prefix(y_dr: &Trajectory, y_cr: &Trajectory, lambda: f64) -> Result<Trajectory, CorrectionError> {
    y_dr.check_compatible(y_cr)?;
    check_lambda(lambda)?;
    let m = y_dr.len();
    if m < 3 {
        return Err(CorrectionError::PrefixTooShort(m));
    }
    if y_cr.len() < 2 {
        return Err(CorrectionError::CorrectiveTooShort(y_cr.len()));
    }
    let d = y_dr.dims();
    let free = m - 2;
    let anchor = y_cr.sample(0);
    let next = y_cr.sample(1);
    let mut fixed_last = vec![0.0; d];
    let mut fixed_prev = vec![0.0; d];
    for c in 0..d {
        fixed_last[c] = anchor[c];
        fixed_prev[c] = anchor[c] - (next[c] - anchor[c]);
    }

    // Hessian block on the free samples, shared by every channel.
    let mut h = SymBand::zeros(free, 2);
    for i in 0..free {
        h.add(i, i, 1.0);
    }
    const STENCIL: [f64; 3] = [1.0, -2.0, 1.0];
    for r in 0..m - 2 {
        for a in 0..3 {
            for b in 0..=a {
                let (i, j) = (r + a, r + b);
                if i < free && j < free {
                    h.add(i, j, lambda * STENCIL[a] * STENCIL[b]);
                }
            }
        }
    }
    let chol = h.cholesky().ok_or(CorrectionError::Singular)?;

    let src = y_dr.as_flat();
    let mut out = vec![0.0; m * d];
    let mut rhs = vec![0.0; free];
    for c in 0..d {
        let fixed = |k: usize| if k == m - 1 { fixed_last[c] } else { fixed_prev[c] };
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = src[i * d + c];
        }
        // Coupling of the free samples to the two pinned ones.
        for r in free.saturating_sub(2)..m - 2 {
            for a in 0..3 {
                for b in 0..3 {
                    let (i, j) = (r + a, r + b);
                    if i < free && j >= free {
                        rhs[i] -= lambda * STENCIL[a] * STENCIL[b] * fixed(j);
                    }
                }
            }
        }
        chol.solve(&mut rhs);
        for (i, v) in rhs.iter().enumerate() {
            out[i * d + c] = *v;
        }
        out[(m - 2) * d + c] = fixed_prev[c];
        out[(m - 1) * d + c] = fixed_last[c];
    }
    Ok(Trajectory::from_flat(out, d, y_dr.dt())?)
}

/// Cuts, smooths and joins; the corrective samples are copied unmodified.
pub fn merge(input: &CorrectionInput) -> Result<MergeResult, CorrectionError> {
    let y_cr = &input.corrective;
    let split = find_split(&input.deficient, y_cr.first());
    let y_dr = input.deficient.slice(0..split + 1)?;
    let y_m = smooth_prefix(&y_dr, y_cr, input.lambda)?;
    let merged = y_m.concat(&y_cr.slice(1..y_cr.len())?)?;
    Ok(MergeResult { merged, split_index: split, modified_prefix: y_m })
}

/// [`merge`] followed by fitting a new primitive to the merged trajectory.
pub fn merge_and_refit(input: &CorrectionInput, cfg: &FitConfig) -> Result<(MergeResult, Dmp), CorrectionError> {
    let result = merge(input)?;
    let dmp = Dmp::fit(&result.merged, cfg)?;
    Ok((result, dmp))
}
