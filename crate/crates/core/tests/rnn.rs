use dmpkit_core::rnn::{
    detect_stream, evaluate, extract_windows, gradients, loss, synth_transients, train, DetectorMetrics, Label,
    LabeledDataset, LabeledWindow, Normalizer, ParamSet, RnnModel, SynthConfig, TrainConfig, WindowSpec,
};
use dmpkit_core::Trajectory;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(n_ch: usize, n_pre: usize, n_post: usize, seed: u64) -> RnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RnnModel::random(n_ch, n_pre, n_post, 0.8, &mut rng)
}

fn random_batch(n_ch: usize, spec: WindowSpec, n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows = (0..n)
        .map(|k| LabeledWindow {
            seq: (0..spec.seq_len() * n_ch).map(|_| rng.random_range(-1.5..1.5)).collect(),
            label: if k % 3 == 0 { Label::Positive } else { Label::Negative },
        })
        .collect();
    LabeledDataset::new(n_ch, spec, windows).unwrap()
}

/// Hand-unrolled recurrence with explicit index arithmetic.
fn unrolled(model: &RnnModel, seq: &[f64]) -> [f64; 2] {
    let n = model.n_ch();
    let p = model.params();
    let mut h = vec![0.0; n];
    for t in 0..model.seq_len() {
        let mut next = vec![0.0; n];
        for (i, out) in next.iter_mut().enumerate() {
            let mut acc = p.b()[i];
            for j in 0..n {
                acc += p.u()[i * n + j] * seq[t * n + j];
                if t > 0 {
                    acc += p.w()[i * n + j] * h[j];
                }
            }
            *out = acc.tanh();
        }
        h = next;
    }
    let o0: f64 = p.c()[0] + (0..n).map(|j| p.v()[j] * h[j]).sum::<f64>();
    let o1: f64 = p.c()[1] + (0..n).map(|j| p.v()[n + j] * h[j]).sum::<f64>();
    let z = o0.exp() + o1.exp();
    [o0.exp() / z, o1.exp() / z]
}

#[test]
fn forward_matches_unrolled_recurrence() {
    let model = random_model(4, 1, 1, 7);
    let batch = random_batch(4, WindowSpec { n_pre: 1, n_post: 1 }, 10, 8);
    for w in batch.windows() {
        let got = model.forward(&w.seq).unwrap().y_hat;
        let expected = unrolled(&model, &w.seq);
        for a in 0..2 {
            assert!((got[a] - expected[a]).abs() < 1e-12);
        }
    }
}

fn unweighted_cross_entropy(model: &RnnModel, batch: &LabeledDataset) -> f64 {
    let total: f64 = batch
        .windows()
        .iter()
        .map(|w| {
            let y = model.forward(&w.seq).unwrap().y_hat;
            let t = w.label.one_hot();
            -(t[0] * y[0].max(1e-12).ln() + t[1] * y[1].max(1e-12).ln())
        })
        .sum();
    total / batch.len() as f64
}

#[test]
fn unit_ratio_is_plain_cross_entropy() {
    let model = random_model(3, 2, 1, 1);
    let batch = random_batch(3, WindowSpec { n_pre: 2, n_post: 1 }, 12, 2).with_ratio(1.0);
    assert_eq!(loss(&model, &batch).unwrap(), unweighted_cross_entropy(&model, &batch));
}

fn finite_difference_check(model: &RnnModel, batch: &LabeledDataset) {
    let analytic = gradients(model, batch).unwrap();
    let eps = 1e-5;
    let n = model.params().as_slice().len();
    for k in 0..n {
        let mut plus = model.clone();
        plus.params_mut().as_mut_slice()[k] += eps;
        let mut minus = model.clone();
        minus.params_mut().as_mut_slice()[k] -= eps;
        let numeric = (loss(&plus, batch).unwrap() - loss(&minus, batch).unwrap()) / (2.0 * eps);
        let a = analytic.as_slice()[k];
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        assert!((a - numeric).abs() / scale < 1e-4, "parameter {k}: analytic {a}, numeric {numeric}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (n_ch, n_pre, n_post, seed) in [(2, 0, 0, 1), (3, 2, 1, 2), (4, 4, 5, 3), (7, 2, 2, 4)] {
        let model = random_model(n_ch, n_pre, n_post, seed);
        let batch = random_batch(n_ch, WindowSpec { n_pre, n_post }, 9, seed + 100).with_ratio(3.5);
        finite_difference_check(&model, &batch);
    }
}

#[test]
fn output_bias_gradient_is_prediction_minus_target() {
    let model = random_model(3, 1, 0, 5);
    let spec = WindowSpec { n_pre: 1, n_post: 0 };
    let windows = vec![
        LabeledWindow { seq: vec![0.0; 6], label: Label::Positive },
        LabeledWindow { seq: vec![0.0; 6], label: Label::Negative },
    ];
    let batch = LabeledDataset::new(3, spec, windows).unwrap();
    assert_eq!(batch.ratio(), 1.0);
    let g = gradients(&model, &batch).unwrap();
    let y = model.forward(&[0.0; 6]).unwrap().y_hat;
    // Mean target is [0.5, 0.5] and both windows share the prediction.
    assert!((g.c()[0] - (y[0] - 0.5)).abs() < 1e-15);
    assert!((g.c()[1] - (y[1] - 0.5)).abs() < 1e-15);
}

#[test]
fn duplicated_batch_has_same_gradient() {
    let model = random_model(3, 1, 2, 9);
    let spec = WindowSpec { n_pre: 1, n_post: 2 };
    let batch = random_batch(3, spec, 8, 10).with_ratio(4.0);
    let doubled: Vec<_> = batch.windows().iter().chain(batch.windows()).cloned().collect();
    let doubled = LabeledDataset::new(3, spec, doubled).unwrap().with_ratio(4.0);
    let a = gradients(&model, &batch).unwrap();
    let b = gradients(&model, &doubled).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300), "{x} vs {y}");
    }
}

#[test]
fn published_confusion_rows_reproduce_scores() {
    // (TP, TN, FP, FN) -> (P, R, F1), as printed with two decimals.
    let rows = [
        (20, 500, 0, 5, 1.0, 0.80, 0.89),
        (22, 500, 0, 3, 1.0, 0.88, 0.94),
        (23, 498, 2, 2, 0.92, 0.92, 0.92),
        (23, 500, 0, 2, 1.0, 0.92, 0.96),
        (25, 500, 0, 0, 1.0, 1.0, 1.0),
        (25, 2500, 0, 0, 1.0, 1.0, 1.0),
    ];
    for (tp, tn, fp, fn_, p, r, f1) in rows {
        let m = DetectorMetrics::from_counts(tp, tn, fp, fn_);
        assert!((m.precision - p).abs() <= 0.005, "P for {tp},{tn},{fp},{fn_}");
        assert!((m.recall - r).abs() <= 0.005);
        assert!((m.f1 - f1).abs() <= 0.005, "F1 {} vs {f1}", m.f1);
        if m.precision + m.recall > 0.0 {
            let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            assert_eq!(m.f1, harmonic);
        }
    }
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = SynthConfig { n_recordings: 10, n_samples: 600, seed: 3, ..SynthConfig::default() };
    let recs = synth_transients(&cfg).unwrap();
    let data = extract_windows(&recs, WindowSpec { n_pre: 2, n_post: 2 }, 10).unwrap();
    let tc = TrainConfig { steps: 300, seed: 11, ..TrainConfig::default() };
    let a = train(&data, &tc).unwrap();
    let b = train(&data, &tc).unwrap();
    assert!(a.final_loss < a.initial_loss);
    assert_eq!(a.model, b.model);
    for (x, y) in a.model.params().as_slice().iter().zip(b.model.params().as_slice()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = SynthConfig { n_recordings: 4, n_samples: 400, ..SynthConfig::default() };
    let data = extract_windows(&synth_transients(&cfg).unwrap(), WindowSpec { n_pre: 1, n_post: 1 }, 5).unwrap();
    let frozen = train(&data, &TrainConfig { learning_rate: 0.0, steps: 50, ..TrainConfig::default() }).unwrap();
    let untouched = train(&data, &TrainConfig { learning_rate: 0.0, steps: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(frozen.model.params(), untouched.model.params());
}

#[test]
fn separable_transients_are_classified_perfectly_on_held_out_recordings() {
    let recs = synth_transients(&SynthConfig::default()).unwrap();
    let (train_recs, test_recs) = recs.split_at(recs.len() / 2);
    let spec = WindowSpec { n_pre: 3, n_post: 3 };
    let trained = train(&extract_windows(train_recs, spec, 20).unwrap(), &TrainConfig::default()).unwrap();
    let m = evaluate(&trained.model, &extract_windows(test_recs, spec, 20).unwrap()).unwrap();
    assert_eq!((m.true_positives, m.false_negatives, m.false_positives), (25, 0, 0));
    assert_eq!(m.f1, 1.0);
}

#[test]
fn without_a_transient_there_is_nothing_to_learn() {
    let cfg = SynthConfig { transient_amplitude: 0.0, ..SynthConfig::default() };
    let recs = synth_transients(&cfg).unwrap();
    let (train_recs, test_recs) = recs.split_at(recs.len() / 2);
    let spec = WindowSpec { n_pre: 2, n_post: 2 };
    let tc = TrainConfig { steps: 500, ..TrainConfig::default() };
    let trained = train(&extract_windows(train_recs, spec, 20).unwrap(), &tc).unwrap();
    let m = evaluate(&trained.model, &extract_windows(test_recs, spec, 20).unwrap()).unwrap();
    assert!(m.f1 < 0.5, "f1 {}", m.f1);
}

/// One channel, one-sample window, fires when the sample exceeds 0.5.
fn threshold_model() -> RnnModel {
    let mut params = ParamSet::zeros(1);
    params.u_mut()[0] = 20.0;
    params.b_mut()[0] = -10.0;
    params.v_mut().copy_from_slice(&[5.0, -5.0]);
    RnnModel::from_params(0, 0, params, Normalizer::identity(1)).unwrap()
}

#[test]
fn stream_shorter_than_window_is_silent() {
    let model = random_model(2, 3, 3, 1);
    let stream = Trajectory::from_flat(vec![5.0; 12], 2, 0.004).unwrap();
    assert!(detect_stream(&model, &stream, 0.5).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_sums_to_one(seed in any::<u64>(), scale in 0.01f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = RnnModel::random(3, 1, 1, scale, &mut rng);
        let seq: Vec<f64> = (0..9).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y = model.forward(&seq).unwrap().y_hat;
        prop_assert!((y[0] + y[1] - 1.0).abs() <= 1e-12);
        prop_assert!(y[0] >= 0.0 && y[1] >= 0.0);
    }

    #[test]
    fn random_models_pass_gradient_check(seed in any::<u64>(), t_len in 1usize..=10) {
        let model = random_model(2, t_len - 1, 0, seed);
        let batch = random_batch(2, WindowSpec { n_pre: t_len - 1, n_post: 0 }, 5, seed ^ 0xabcd).with_ratio(2.0);
        finite_difference_check(&model, &batch);
    }

    #[test]
    fn detections_ignore_the_future(spikes in prop::collection::vec(0usize..400, 1..6), garbage in prop::collection::vec(-3.0f64..3.0, 400)) {
        let model = threshold_model();
        let mut values = vec![0.0; 400];
        for &s in &spikes {
            values[s] = 1.0;
        }
        let stream = Trajectory::from_flat(values.clone(), 1, 0.004).unwrap();
        let dets = detect_stream(&model, &stream, 0.5).unwrap();
        prop_assert!(!dets.is_empty());
        for d in &dets {
            let mut altered = values.clone();
            altered[d.index + 1..].copy_from_slice(&garbage[d.index + 1..]);
            let after = detect_stream(&model, &Trajectory::from_flat(altered, 1, 0.004).unwrap(), 0.5).unwrap();
            let before: Vec<_> = dets.iter().filter(|x| x.index <= d.index).collect();
            prop_assert_eq!(before.len(), after.iter().filter(|x| x.index <= d.index).count());
            for (a, b) in before.iter().zip(&after) {
                prop_assert_eq!(a.index, b.index);
            }
        }
    }
}
