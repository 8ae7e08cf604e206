use alloc::vec::Vec;

use super::RnnError;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `[1, 0]` for a transient, `[0, 1]` otherwise.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Label::Positive => [1.0, 0.0],
            Label::Negative => [0.0, 1.0],
        }
    }
}

/// Samples kept before and after a transient peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub n_pre: usize,
    pub n_post: usize,
}

impl WindowSpec {
    pub fn seq_len(&self) -> usize {
        self.n_pre + 1 + self.n_post
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    /// `T x n_ch`, row-major.
    pub seq: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    n_ch: usize,
    spec: WindowSpec,
    windows: Vec<LabeledWindow>,
    ratio: f64,
}

impl LabeledDataset {
    /// The class weight defaults to the negative-to-positive count ratio (1
    /// when either class is missing).
    pub fn new(n_ch: usize, spec: WindowSpec, windows: Vec<LabeledWindow>) -> Result<Self, RnnError> {
        if n_ch == 0 {
            return Err(RnnError::Shape("n_ch must be positive"));
        }
        let expected = spec.seq_len() * n_ch;
        if let Some(w) = windows.iter().find(|w| w.seq.len() != expected) {
            return Err(RnnError::SeqShape { expected, got: w.seq.len() });
        }
        let mut d = Self { n_ch, spec, windows, ratio: 1.0 };
        let (p, n) = d.class_counts();
        if p > 0 && n > 0 {
            d.ratio = n as f64 / p as f64;
        }
        Ok(d)
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn n_ch(&self) -> usize {
        self.n_ch
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    pub fn seq_len(&self) -> usize {
        self.spec.seq_len()
    }

    pub fn windows(&self) -> &[LabeledWindow] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// `(positives, negatives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let p = self.windows.iter().filter(|w| w.label == Label::Positive).count();
        (p, self.windows.len() - p)
    }

    /// Same windows with `f` applied to every sequence.
    pub fn map_sequences<F: FnMut(&[f64]) -> Vec<f64>>(&self, mut f: F) -> Self {
        Self {
            n_ch: self.n_ch,
            spec: self.spec,
            windows: self.windows.iter().map(|w| LabeledWindow { seq: f(&w.seq), label: w.label }).collect(),
            ratio: self.ratio,
        }
    }
}

/// A raw multi-channel torque log with the sample indices of its transient peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub torques: Trajectory,
    pub peaks: Vec<usize>,
}

fn copy_rows(t: &Trajectory, start: usize, len: usize) -> Vec<f64> {
    let d = t.dims();
    t.as_flat()[start * d..(start + len) * d].to_vec()
}

/// Samples `[peak - n_pre, peak + n_post]`, if they all exist.
pub fn positive_window(rec: &Trajectory, peak: usize, spec: WindowSpec) -> Option<Vec<f64>> {
    let start = peak.checked_sub(spec.n_pre)?;
    (start + spec.seq_len() <= rec.len()).then(|| copy_rows(rec, start, spec.seq_len()))
}

/// Up to `count` non-overlapping windows that end before the positive window
/// starts, taken backwards from it.
pub fn negative_windows(rec: &Trajectory, peak: usize, spec: WindowSpec, count: usize) -> Vec<Vec<f64>> {
    let t = spec.seq_len();
    let mut end = peak.saturating_sub(spec.n_pre);
    let mut out = Vec::with_capacity(count);
    while out.len() < count && end >= t {
        end -= t;
        out.push(copy_rows(rec, end, t));
    }
    out
}

/// One positive per marked peak and `negatives_per_positive` negatives before it.
pub fn extract_windows(
    recordings: &[Recording],
    spec: WindowSpec,
    negatives_per_positive: usize,
) -> Result<LabeledDataset, RnnError> {
    let n_ch = recordings.first().map(|r| r.torques.dims()).ok_or(RnnError::NoData)?;
    let mut windows = Vec::new();
    for rec in recordings {
        if rec.torques.dims() != n_ch {
            return Err(RnnError::Shape("recordings differ in channel count"));
        }
        for &peak in &rec.peaks {
            let Some(pos) = positive_window(&rec.torques, peak, spec) else { continue };
            windows.push(LabeledWindow { seq: pos, label: Label::Positive });
            for neg in negative_windows(&rec.torques, peak, spec, negatives_per_positive) {
                windows.push(LabeledWindow { seq: neg, label: Label::Negative });
            }
        }
    }
    LabeledDataset::new(n_ch, spec, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ramp(n: usize) -> Trajectory {
        Trajectory::from_flat((0..n).map(|k| k as f64).collect(), 1, 0.004).unwrap()
    }

    #[test]
    fn positive_window_arithmetic() {
        let spec = WindowSpec { n_pre: 5, n_post: 3 };
        assert_eq!(spec.seq_len(), 9);
        let w = positive_window(&ramp(100), 50, spec).unwrap();
        assert_eq!(w, (45..=53).map(|k| k as f64).collect::<Vec<_>>());
        assert!(positive_window(&ramp(100), 4, spec).is_none());
        assert!(positive_window(&ramp(100), 97, spec).is_none());
    }

    #[test]
    fn negatives_do_not_overlap_or_touch_positive() {
        let spec = WindowSpec { n_pre: 2, n_post: 1 };
        let negs = negative_windows(&ramp(100), 50, spec, 5);
        assert_eq!(negs.len(), 5);
        assert_eq!(negs[0], vec![44.0, 45.0, 46.0, 47.0]);
        assert_eq!(negs[1], vec![40.0, 41.0, 42.0, 43.0]);
        // Only as many as fit.
        assert_eq!(negative_windows(&ramp(100), 10, spec, 5).len(), 2);
    }

    #[test]
    fn dataset_ratio() {
        let rec = Recording { torques: ramp(200), peaks: vec![150] };
        let d = extract_windows(&[rec], WindowSpec { n_pre: 1, n_post: 1 }, 20).unwrap();
        assert_eq!(d.class_counts(), (1, 20));
        assert_eq!(d.ratio(), 20.0);
        assert!(matches!(
            LabeledDataset::new(
                1,
                WindowSpec { n_pre: 1, n_post: 1 },
                vec![LabeledWindow { seq: vec![0.0], label: Label::Negative }]
            ),
            Err(RnnError::SeqShape { expected: 3, got: 1 })
        ));
    }
}
