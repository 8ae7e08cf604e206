use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::data::{Label, LabeledDataset};
use super::RnnError;
use crate::math;

/// Predictions below this are clamped before taking the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Offsets of each parameter block inside the flat parameter vector
/// `[U | W | V | b | c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_ch: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        let n = self.n_ch;
        2 * n * n + 2 * n + n + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn u(&self) -> core::ops::Range<usize> {
        0..self.n_ch * self.n_ch
    }

    pub fn w(&self) -> core::ops::Range<usize> {
        let n = self.n_ch;
        n * n..2 * n * n
    }

    pub fn v(&self) -> core::ops::Range<usize> {
        let n = self.n_ch;
        2 * n * n..2 * n * n + 2 * n
    }

    pub fn b(&self) -> core::ops::Range<usize> {
        let s = self.v().end;
        s..s + self.n_ch
    }

    pub fn c(&self) -> core::ops::Range<usize> {
        let s = self.b().end;
        s..s + 2
    }
}

/// Flat parameter-shaped vector; used for the model itself, its gradients and
/// the optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layout: Layout,
    data: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(n_ch: usize) -> Self {
        let layout = Layout { n_ch };
        Self { layout, data: vec![0.0; layout.len()] }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Input weights, `n_ch x n_ch` row-major.
    pub fn u(&self) -> &[f64] {
        &self.data[self.layout.u()]
    }

    /// Recurrent weights, `n_ch x n_ch` row-major.
    pub fn w(&self) -> &[f64] {
        &self.data[self.layout.w()]
    }

    /// Output weights, `2 x n_ch` row-major.
    pub fn v(&self) -> &[f64] {
        &self.data[self.layout.v()]
    }

    pub fn b(&self) -> &[f64] {
        &self.data[self.layout.b()]
    }

    pub fn c(&self) -> &[f64] {
        &self.data[self.layout.c()]
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        let r = self.layout.u();
        &mut self.data[r]
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        let r = self.layout.w();
        &mut self.data[r]
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        let r = self.layout.v();
        &mut self.data[r]
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        let r = self.layout.b();
        &mut self.data[r]
    }

    pub fn c_mut(&mut self) -> &mut [f64] {
        let r = self.layout.c();
        &mut self.data[r]
    }
}

/// Per-channel affine input scaling, `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n_ch: usize) -> Self {
        Self { mean: vec![0.0; n_ch], std: vec![1.0; n_ch] }
    }

    /// Statistics over every row of every window in `data`.
    pub fn fit(data: &LabeledDataset) -> Self {
        let n = data.n_ch();
        let mut mean = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let mut count = 0usize;
        for w in data.windows() {
            for row in w.seq.chunks_exact(n) {
                for c in 0..n {
                    mean[c] += row[c];
                    sq[c] += row[c] * row[c];
                }
                count += 1;
            }
        }
        let count = count.max(1) as f64;
        let std = (0..n)
            .map(|c| {
                let m = mean[c] / count;
                let var = (sq[c] / count - m * m).max(0.0);
                let s = math::sqrt(var);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        for m in mean.iter_mut() {
            *m /= count;
        }
        Self { mean, std }
    }

    pub fn apply(&self, seq: &[f64]) -> Vec<f64> {
        let n = self.mean.len();
        let mut out = seq.to_vec();
        for row in out.chunks_exact_mut(n) {
            for c in 0..n {
                row[c] = (row[c] - self.mean[c]) / self.std[c];
            }
        }
        out
    }
}

/// Single-hidden-layer tanh recurrent classifier over windows of
/// `n_pre + 1 + n_post` samples with `n_ch` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    n_pre: usize,
    n_post: usize,
    params: ParamSet,
    normalizer: Normalizer,
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `[p(transient), p(no transient)]`.
    pub y_hat: [f64; 2],
    pub h_last: Vec<f64>,
}

fn softmax(o: [f64; 2]) -> [f64; 2] {
    let m = o[0].max(o[1]);
    let a = math::exp(o[0] - m);
    let b = math::exp(o[1] - m);
    let s = a + b;
    [a / s, b / s]
}

impl RnnModel {
    pub fn zeros(n_ch: usize, n_pre: usize, n_post: usize) -> Self {
        Self { n_pre, n_post, params: ParamSet::zeros(n_ch), normalizer: Normalizer::identity(n_ch) }
    }

    /// Every parameter drawn from `uniform(-scale, scale)`.
    pub fn random<R: Rng>(n_ch: usize, n_pre: usize, n_post: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(n_ch, n_pre, n_post);
        for p in m.params.as_mut_slice() {
            *p = rng.random_range(-scale..scale);
        }
        m
    }

    pub fn from_params(
        n_pre: usize,
        n_post: usize,
        params: ParamSet,
        normalizer: Normalizer,
    ) -> Result<Self, RnnError> {
        let n = params.layout().n_ch;
        if n == 0 {
            return Err(RnnError::Shape("n_ch must be positive"));
        }
        if normalizer.mean.len() != n || normalizer.std.len() != n {
            return Err(RnnError::Shape("normalizer channel count"));
        }
        if params.as_slice().iter().chain(&normalizer.mean).chain(&normalizer.std).any(|v| !v.is_finite()) {
            return Err(RnnError::NonFinite);
        }
        if normalizer.std.iter().any(|&s| s <= 0.0) {
            return Err(RnnError::Shape("normalizer std must be positive"));
        }
        Ok(Self { n_pre, n_post, params, normalizer })
    }

    pub fn n_ch(&self) -> usize {
        self.params.layout().n_ch
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    /// Window length `T = n_pre + 1 + n_post`.
    pub fn seq_len(&self) -> usize {
        self.n_pre + 1 + self.n_post
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = normalizer;
    }

    fn check_seq(&self, seq: &[f64]) -> Result<(), RnnError> {
        if seq.len() != self.seq_len() * self.n_ch() {
            return Err(RnnError::SeqShape { expected: self.seq_len() * self.n_ch(), got: seq.len() });
        }
        Ok(())
    }

    /// Runs the recurrence on an already normalized `T x n_ch` window.
    pub fn forward(&self, seq: &[f64]) -> Result<Forward, RnnError> {
        self.check_seq(seq)?;
        let n = self.n_ch();
        let mut h = vec![0.0; n];
        let mut a = vec![0.0; n];
        for x in seq.chunks_exact(n) {
            pre_activation(&self.params, x, &h, &mut a);
            for (hi, ai) in h.iter_mut().zip(&a) {
                *hi = math::tanh(*ai);
            }
        }
        let y_hat = softmax(output(&self.params, &h));
        Ok(Forward { y_hat, h_last: h })
    }

    /// Normalizes a raw window with the stored statistics, then [`forward`](Self::forward).
    pub fn predict(&self, raw: &[f64]) -> Result<[f64; 2], RnnError> {
        self.check_seq(raw)?;
        Ok(self.forward(&self.normalizer.apply(raw))?.y_hat)
    }

    /// `true` when `p(transient) > 0.5`.
    pub fn classify(&self, raw: &[f64]) -> Result<bool, RnnError> {
        Ok(self.predict(raw)?[0] > 0.5)
    }
}

/// `a = b + W h + U x`
fn pre_activation(p: &ParamSet, x: &[f64], h: &[f64], a: &mut [f64]) {
    let n = x.len();
    let (u, w, b) = (p.u(), p.w(), p.b());
    for i in 0..n {
        let mut s = b[i];
        for j in 0..n {
            s += u[i * n + j] * x[j] + w[i * n + j] * h[j];
        }
        a[i] = s;
    }
}

/// `o = c + V h`
fn output(p: &ParamSet, h: &[f64]) -> [f64; 2] {
    let n = h.len();
    let (v, c) = (p.v(), p.c());
    [c[0] + math::dot(&v[..n], h), c[1] + math::dot(&v[n..2 * n], h)]
}

fn example_weight(label: Label, ratio: f64) -> f64 {
    match label {
        Label::Positive => ratio,
        Label::Negative => 1.0,
    }
}

fn check_batch(model: &RnnModel, batch: &LabeledDataset) -> Result<(), RnnError> {
    if batch.is_empty() {
        return Err(RnnError::EmptyBatch);
    }
    if batch.n_ch() != model.n_ch() || batch.seq_len() != model.seq_len() {
        return Err(RnnError::Shape("batch does not match model window"));
    }
    Ok(())
}

/// Class-weighted cross-entropy averaged over the batch; positives weigh
/// `batch.ratio()`, negatives 1. Windows are used as given (no normalization).
pub fn loss(model: &RnnModel, batch: &LabeledDataset) -> Result<f64, RnnError> {
    check_batch(model, batch)?;
    let mut total = 0.0;
    for w in batch.windows() {
        let y_hat = model.forward(&w.seq)?.y_hat;
        let target = w.label.one_hot();
        let ce: f64 = (0..2).map(|a| -target[a] * math::ln(y_hat[a].max(LOG_CLAMP))).sum();
        total += ce * example_weight(w.label, batch.ratio());
    }
    Ok(total / batch.len() as f64)
}

/// Reusable buffers for backpropagation through time.
pub(crate) struct Tape {
    hs: Vec<f64>,
    a: Vec<f64>,
    dh: Vec<f64>,
    da: Vec<f64>,
}

impl Tape {
    pub(crate) fn new(n_ch: usize, t_len: usize) -> Self {
        Self { hs: vec![0.0; (t_len + 1) * n_ch], a: vec![0.0; n_ch], dh: vec![0.0; n_ch], da: vec![0.0; n_ch] }
    }
}

/// Adds the gradient of one window's (unaveraged, weighted) loss into `grad`
/// and returns that loss.
pub(crate) fn accumulate(
    p: &ParamSet,
    seq: &[f64],
    label: Label,
    weight: f64,
    grad: &mut ParamSet,
    tape: &mut Tape,
) -> f64 {
    let n = p.layout().n_ch;
    let t_len = seq.len() / n;
    // hs[0] is the zero initial state, hs[t + 1] the state after sample t.
    tape.hs[..n].fill(0.0);
    for t in 0..t_len {
        let (prev, rest) = tape.hs.split_at_mut((t + 1) * n);
        let h_prev = &prev[t * n..];
        pre_activation(p, &seq[t * n..(t + 1) * n], h_prev, &mut tape.a);
        for i in 0..n {
            rest[i] = math::tanh(tape.a[i]);
        }
    }
    let h_last = &tape.hs[t_len * n..(t_len + 1) * n];
    let y_hat = softmax(output(p, h_last));
    let target = label.one_hot();
    let truth = if target[0] > 0.5 { 0 } else { 1 };
    let loss = -math::ln(y_hat[truth].max(LOG_CLAMP)) * weight;
    if y_hat[truth] < LOG_CLAMP {
        return loss;
    }

    let g_o = [weight * (y_hat[0] - target[0]), weight * (y_hat[1] - target[1])];
    {
        let gc = grad.c_mut();
        gc[0] += g_o[0];
        gc[1] += g_o[1];
    }
    {
        let gv = grad.v_mut();
        for i in 0..n {
            gv[i] += g_o[0] * h_last[i];
            gv[n + i] += g_o[1] * h_last[i];
        }
    }
    let v = p.v();
    for i in 0..n {
        tape.dh[i] = v[i] * g_o[0] + v[n + i] * g_o[1];
    }
    let w = p.w();
    for t in (0..t_len).rev() {
        let h = &tape.hs[(t + 1) * n..(t + 2) * n];
        let h_prev = &tape.hs[t * n..(t + 1) * n];
        let x = &seq[t * n..(t + 1) * n];
        for i in 0..n {
            tape.da[i] = tape.dh[i] * (1.0 - h[i] * h[i]);
        }
        let layout = grad.layout();
        let g = grad.as_mut_slice();
        for i in 0..n {
            let da = tape.da[i];
            g[layout.b().start + i] += da;
            let u0 = layout.u().start + i * n;
            let w0 = layout.w().start + i * n;
            for j in 0..n {
                g[u0 + j] += da * x[j];
                g[w0 + j] += da * h_prev[j];
            }
        }
        if t > 0 {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += w[i * n + j] * tape.da[i];
                }
                tape.dh[j] = s;
            }
        }
    }
    loss
}

/// Loss and its gradient for a batch of already normalized windows.
pub(crate) fn loss_and_gradient(p: &ParamSet, batch: &LabeledDataset, grad: &mut ParamSet, tape: &mut Tape) -> f64 {
    grad.as_mut_slice().fill(0.0);
    let mut total = 0.0;
    for w in batch.windows() {
        total += accumulate(p, &w.seq, w.label, example_weight(w.label, batch.ratio()), grad, tape);
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grad.as_mut_slice() {
        *g *= scale;
    }
    total * scale
}

/// Exact gradient of [`loss`] with respect to every parameter, by
/// backpropagation through time.
pub fn gradients(model: &RnnModel, batch: &LabeledDataset) -> Result<ParamSet, RnnError> {
    check_batch(model, batch)?;
    let mut grad = ParamSet::zeros(model.n_ch());
    let mut tape = Tape::new(model.n_ch(), model.seq_len());
    loss_and_gradient(&model.params, batch, &mut grad, &mut tape);
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::data::{LabeledWindow, WindowSpec};

    #[test]
    fn layout_covers_everything_once() {
        let l = Layout { n_ch: 7 };
        assert_eq!(l.u(), 0..49);
        assert_eq!(l.w(), 49..98);
        assert_eq!(l.v(), 98..112);
        assert_eq!(l.b(), 112..119);
        assert_eq!(l.c(), 119..121);
        assert_eq!(l.len(), 121);
    }

    #[test]
    fn zero_model_is_undecided() {
        let m = RnnModel::zeros(3, 1, 1);
        let f = m.forward(&[0.3; 9]).unwrap();
        assert_eq!(f.y_hat, [0.5, 0.5]);
        assert_eq!(f.h_last, vec![0.0; 3]);
    }

    #[test]
    fn output_bias_only() {
        let mut m = RnnModel::zeros(2, 0, 2);
        m.params_mut().c_mut()[0] = 3.0f64.ln();
        let y = m.forward(&[1.0, -2.0, 0.5, 0.5, 4.0, 1.0]).unwrap().y_hat;
        assert!((y[0] - 0.75).abs() < 1e-15);
        assert!((y[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let m = RnnModel::zeros(2, 1, 1);
        assert_eq!(m.forward(&[0.0; 5]), Err(RnnError::SeqShape { expected: 6, got: 5 }));
    }

    #[test]
    fn weighted_loss_of_undecided_positive() {
        let m = RnnModel::zeros(1, 0, 0);
        let spec = WindowSpec { n_pre: 0, n_post: 0 };
        let batch = LabeledDataset::new(1, spec, vec![LabeledWindow { seq: vec![1.0], label: Label::Positive }])
            .unwrap()
            .with_ratio(20.0);
        let l = loss(&m, &batch).unwrap();
        assert!((l - 20.0 * 2.0f64.ln()).abs() < 1e-12);
        assert!((l - 13.863).abs() < 1e-3);
    }

    #[test]
    fn confident_predictions_have_no_loss() {
        let mut m = RnnModel::zeros(1, 0, 0);
        m.params_mut().c_mut()[0] = 40.0;
        let spec = WindowSpec { n_pre: 0, n_post: 0 };
        let batch =
            LabeledDataset::new(1, spec, vec![LabeledWindow { seq: vec![0.0], label: Label::Positive }]).unwrap();
        assert!(loss(&m, &batch).unwrap() < 1e-15);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let m = RnnModel::zeros(1, 0, 0);
        let batch = LabeledDataset::new(1, WindowSpec { n_pre: 0, n_post: 0 }, vec![]).unwrap();
        assert_eq!(loss(&m, &batch), Err(RnnError::EmptyBatch));
        assert_eq!(gradients(&m, &batch), Err(RnnError::EmptyBatch));
    }
}
