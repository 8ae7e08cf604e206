use alloc::vec::Vec;

use super::model::RnnModel;
use super::RnnError;
use crate::math;
use crate::trajectory::Trajectory;

/// Seconds after a detection during which further detections are suppressed.
pub const DEFAULT_REFRACTORY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Index of the window's newest sample, i.e. the first sample at which the
    /// detection could be made.
    pub index: usize,
    /// Index of the sample the window treats as the peak.
    pub peak_index: usize,
    pub time: f64,
    pub confidence: f64,
}

/// Slides the model's window over a stream. A window ending at sample `k`
/// only uses samples up to `k`.
pub fn detect_stream(model: &RnnModel, stream: &Trajectory, refractory: f64) -> Result<Vec<Detection>, RnnError> {
    if stream.dims() != model.n_ch() {
        return Err(RnnError::Shape("stream channel count differs from model"));
    }
    let t_len = model.seq_len();
    let d = stream.dims();
    let refractory_samples = math::ceil(refractory / stream.dt()) as usize;
    let flat = stream.as_flat();
    let mut out: Vec<Detection> = Vec::new();
    for end in t_len - 1..stream.len() {
        if let Some(last) = out.last() {
            if end - last.index < refractory_samples {
                continue;
            }
        }
        let start = end + 1 - t_len;
        let y = model.predict(&flat[start * d..(end + 1) * d])?;
        if y[0] > 0.5 {
            out.push(Detection {
                index: end,
                peak_index: start + model.n_pre(),
                time: end as f64 * stream.dt(),
                confidence: y[0],
            });
        }
    }
    Ok(out)
}
