//! Banded symmetric positive definite solves.

use alloc::vec;
use alloc::vec::Vec;

/// Symmetric matrix with half-bandwidth `p`, lower band stored per row:
/// `band[i * (p + 1) + k]` holds entry `(i, i - k)`.
#[derive(Debug, Clone)]
pub(crate) struct SymBand {
    n: usize,
    p: usize,
    band: Vec<f64>,
}

impl SymBand {
    pub(crate) fn zeros(n: usize, p: usize) -> Self {
        Self { n, p, band: vec![0.0; n * (p + 1)] }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror). Requires `|i - j| <= p`.
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.p);
        self.band[i * (self.p + 1) + (i - j)] += v;
    }

    /// In-place Cholesky `A = L L^T`; `None` if a pivot is not positive.
    pub(crate) fn cholesky(mut self) -> Option<BandCholesky> {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(p);
            for j in j0..=i {
                let mut s = self.band[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(p));
                for k in k0..j {
                    s -= self.band[i * w + (i - k)] * self.band[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    self.band[i * w] = crate::math::sqrt(s);
                } else {
                    self.band[i * w + (i - j)] = s / self.band[j * w];
                }
            }
        }
        Some(BandCholesky { n, p, l: self.band })
    }
}

pub(crate) struct BandCholesky {
    n: usize,
    p: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub(crate) fn solve(&self, rhs: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(p)..i {
                s -= self.l[i * w + (i - k)] * rhs[k];
            }
            rhs[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..(i + w).min(n) {
                s -= self.l[k * w + (k - i)] * rhs[k];
            }
            rhs[i] = s / self.l[i * w];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pentadiagonal_system() {
        // A = I + D^T D for the 6-point second difference
        let n = 6;
        let mut a = SymBand::zeros(n, 2);
        let mut dense = [[0.0f64; 6]; 6];
        for i in 0..n {
            a.add(i, i, 1.0);
            dense[i][i] += 1.0;
        }
        for r in 0..n - 2 {
            let row = [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)];
            for &(i, vi) in &row {
                for &(j, vj) in &row {
                    dense[i][j] += vi * vj;
                    if i >= j {
                        a.add(i, j, vi * vj);
                    }
                }
            }
        }
        let x_true = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dense[i][j] * x_true[j]).sum()).collect();
        a.cholesky().unwrap().solve(&mut b);
        for (x, t) in b.iter().zip(x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(a.cholesky().is_none());
    }
}
