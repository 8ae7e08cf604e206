//! Uniformly sampled multi-channel signals.

use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory has no samples")]
    Empty,
    #[error("trajectory has zero channels")]
    NoChannels,
    #[error("sample period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("row {row} has {got} channels, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("non-finite value at sample {row}, channel {channel}")]
    NonFinite { row: usize, channel: usize },
    #[error("trajectories differ in {0}")]
    Mismatch(&'static str),
}

/// `N × D` samples stored row-major, taken every `dt` seconds.
///
/// The type itself accepts a single sample (a zero-length rollout produces
/// one); operations that need derivatives check their own minimum length.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: Vec<f64>,
    dims: usize,
    dt: f64,
}

impl Trajectory {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], dt: f64) -> Result<Self, TrajectoryError> {
        let first = rows.first().ok_or(TrajectoryError::Empty)?;
        let dims = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dims);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dims {
                return Err(TrajectoryError::Ragged { row, got: r.len(), expected: dims });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(data, dims, dt)
    }

    pub fn from_flat(data: Vec<f64>, dims: usize, dt: f64) -> Result<Self, TrajectoryError> {
        if dims == 0 {
            return Err(TrajectoryError::NoChannels);
        }
        if data.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if !data.len().is_multiple_of(dims) {
            return Err(TrajectoryError::Ragged { row: data.len() / dims, got: data.len() % dims, expected: dims });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TrajectoryError::BadPeriod(dt));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TrajectoryError::NonFinite { row: i / dims, channel: i % dims });
        }
        Ok(Self { data, dims, dt })
    }

    /// Samples a function of time at `n` points starting from `t = 0`.
    pub fn from_fn<F>(n: usize, dims: usize, dt: f64, mut f: F) -> Result<Self, TrajectoryError>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut data = alloc::vec![0.0; n * dims];
        for (k, row) in data.chunks_exact_mut(dims.max(1)).enumerate() {
            f(k as f64 * dt, row);
        }
        Self::from_flat(data, dims, dt)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of the last sample, `(N - 1) * dt`.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dims..(k + 1) * self.dims]
    }

    pub fn first(&self) -> &[f64] {
        self.sample(0)
    }

    pub fn last(&self) -> &[f64] {
        self.sample(self.len() - 1)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dims)
    }

    pub fn channel(&self, c: usize) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.rows().map(move |r| r[c])
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// `max - min` of every channel.
    pub fn channel_ranges(&self) -> Vec<f64> {
        (0..self.dims)
            .map(|c| {
                let (lo, hi) =
                    self.channel(c).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .collect()
    }

    /// Largest per-channel range.
    pub fn range(&self) -> f64 {
        self.channel_ranges().into_iter().fold(0.0, f64::max)
    }

    pub fn slice(&self, rows: Range<usize>) -> Result<Self, TrajectoryError> {
        if rows.start >= rows.end || rows.end > self.len() {
            return Err(TrajectoryError::Empty);
        }
        Ok(Self {
            data: self.data[rows.start * self.dims..rows.end * self.dims].to_vec(),
            dims: self.dims,
            dt: self.dt,
        })
    }

    /// Appends `other` after `self`; both must share channel count and period.
    pub fn concat(&self, other: &Trajectory) -> Result<Self, TrajectoryError> {
        self.check_compatible(other)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { data, dims: self.dims, dt: self.dt })
    }

    pub fn check_compatible(&self, other: &Trajectory) -> Result<(), TrajectoryError> {
        if self.dims != other.dims {
            return Err(TrajectoryError::Mismatch("channel count"));
        }
        if self.dt != other.dt {
            return Err(TrajectoryError::Mismatch("sample period"));
        }
        Ok(())
    }

    /// Largest absolute change between consecutive samples over all channels.
    pub fn max_step(&self) -> f64 {
        self.data
            .chunks_exact(self.dims)
            .zip(self.data.chunks_exact(self.dims).skip(1))
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (y - x).abs()))
            .fold(0.0, f64::max)
    }
}
