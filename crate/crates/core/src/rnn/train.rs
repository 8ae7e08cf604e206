use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{Label, LabeledDataset};
use super::model::{self, Normalizer, ParamSet, RnnModel, Tape};
use super::RnnError;
use crate::math;

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet,
    v: ParamSet,
    steps: i32,
}

impl Adam {
    pub fn new(n_ch: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: ParamSet::zeros(n_ch), v: ParamSet::zeros(n_ch), steps: 0 }
    }

    pub fn step(&mut self, params: &mut ParamSet, grad: &ParamSet) {
        self.steps += 1;
        let c1 = 1.0 - math::powi(self.beta1, self.steps);
        let c2 = 1.0 - math::powi(self.beta2, self.steps);
        let it = params
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(self.m.as_mut_slice().iter_mut().zip(self.v.as_mut_slice()));
        for ((p, &g), (m, v)) in it {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / (math::sqrt(*v / c2) + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Parameters start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, steps: 2000, init_scale: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: RnnModel,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Full-batch training. Inputs are z-scored per channel with statistics of
/// `data`, which are stored in the returned model.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<Trained, RnnError> {
    let (pos, neg) = data.class_counts();
    if pos == 0 || neg == 0 {
        return Err(RnnError::SingleClass);
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite() && cfg.init_scale > 0.0) {
        return Err(RnnError::Config("learning rate and init scale"));
    }
    let normalizer = Normalizer::fit(data);
    let batch = data.map_sequences(|s| normalizer.apply(s));
    let spec = data.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = RnnModel::random(data.n_ch(), spec.n_pre, spec.n_post, cfg.init_scale, &mut rng);
    model.set_normalizer(normalizer);

    let mut adam = Adam::new(data.n_ch(), cfg.learning_rate);
    let mut grad = ParamSet::zeros(data.n_ch());
    let mut tape = Tape::new(data.n_ch(), data.seq_len());
    let mut initial_loss = None;
    for _ in 0..cfg.steps {
        let l = model::loss_and_gradient(model.params(), &batch, &mut grad, &mut tape);
        if !l.is_finite() {
            return Err(RnnError::NonFinite);
        }
        initial_loss.get_or_insert(l);
        adam.step(model.params_mut(), &grad);
    }
    let final_loss = model::loss(&model, &batch)?;
    if !final_loss.is_finite() || model.params().as_slice().iter().any(|p| !p.is_finite()) {
        return Err(RnnError::NonFinite);
    }
    Ok(Trained { model, initial_loss: initial_loss.unwrap_or(final_loss), final_loss })
}

/// Confusion counts and derived scores; the positive class is "transient".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorMetrics {
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl DetectorMetrics {
    /// Undefined ratios are reported as 0.
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self {
            true_positives: tp,
            true_negatives: tn,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Every positive found and nothing else.
    pub fn is_perfect(&self) -> bool {
        self.true_positives > 0 && self.false_positives == 0 && self.false_negatives == 0
    }
}

/// Classifies raw (unnormalized) windows with the model's own normalizer.
pub fn evaluate(model: &RnnModel, data: &LabeledDataset) -> Result<DetectorMetrics, RnnError> {
    if data.n_ch() != model.n_ch() || data.seq_len() != model.seq_len() {
        return Err(RnnError::Shape("dataset does not match model window"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for w in data.windows() {
        match (model.classify(&w.seq)?, w.label) {
            (true, Label::Positive) => tp += 1,
            (false, Label::Negative) => tn += 1,
            (true, Label::Negative) => fp += 1,
            (false, Label::Positive) => fn_ += 1,
        }
    }
    Ok(DetectorMetrics::from_counts(tp, tn, fp, fn_))
}
