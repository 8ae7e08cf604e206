use alloc::vec::Vec;

use super::data::{extract_windows, Recording, WindowSpec};
use super::model::RnnModel;
use super::train::{evaluate, train, DetectorMetrics, TrainConfig};
use super::RnnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Negatives per positive while searching.
    pub search_ratio: usize,
    /// Negatives per positive for the final model.
    pub final_ratio: usize,
    /// Largest `n_pre` (and starting `n_post`) tried.
    pub max_window: usize,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { search_ratio: 20, final_ratio: 100, max_window: 30, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub spec: WindowSpec,
    pub negatives_per_positive: usize,
    pub metrics: DetectorMetrics,
    pub test_positives: usize,
    pub test_negatives: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Every configuration tried, in order; the last row is the final model.
    pub rows: Vec<SweepRow>,
    pub chosen: WindowSpec,
    /// `false` when no window up to the cap separated the test set perfectly.
    pub perfect: bool,
    pub model: RnnModel,
}

/// Trains on the first half of the recordings and scores on the second half.
fn trial(
    train_set: &[Recording],
    test_set: &[Recording],
    spec: WindowSpec,
    ratio: usize,
    cfg: &TrainConfig,
) -> Result<(SweepRow, RnnModel), RnnError> {
    let train_data = extract_windows(train_set, spec, ratio)?;
    let test_data = extract_windows(test_set, spec, ratio)?;
    let model = train(&train_data, cfg)?.model;
    let metrics = evaluate(&model, &test_data)?;
    let (test_positives, test_negatives) = test_data.class_counts();
    let row = SweepRow { spec, negatives_per_positive: ratio, metrics, test_positives, test_negatives };
    Ok((row, model))
}

/// Grows a symmetric window until the held-out F1 reaches 1, then trims the
/// post-peak part while F1 stays at 1, and retrains the chosen window with
/// the larger negative ratio.
pub fn sweep_window(recordings: &[Recording], cfg: &SweepConfig) -> Result<SweepOutcome, RnnError> {
    if recordings.len() < 2 || cfg.max_window == 0 {
        return Err(RnnError::Config("need two recordings and a positive window cap"));
    }
    let (train_set, test_set) = recordings.split_at(recordings.len() / 2);
    let mut rows = Vec::new();

    let mut found = None;
    let mut best: Option<SweepRow> = None;
    for k in 1..=cfg.max_window {
        let spec = WindowSpec { n_pre: k, n_post: k };
        let (row, _) = trial(train_set, test_set, spec, cfg.search_ratio, &cfg.train)?;
        rows.push(row);
        if best.is_none_or(|b| row.metrics.f1 > b.metrics.f1) {
            best = Some(row);
        }
        if row.metrics.is_perfect() {
            found = Some(k);
            break;
        }
    }

    let (chosen, perfect) = match found {
        Some(k) => {
            let mut n_post = k;
            for p in (0..k).rev() {
                let spec = WindowSpec { n_pre: k, n_post: p };
                let (row, _) = trial(train_set, test_set, spec, cfg.search_ratio, &cfg.train)?;
                rows.push(row);
                if !row.metrics.is_perfect() {
                    break;
                }
                n_post = p;
            }
            (WindowSpec { n_pre: k, n_post }, true)
        }
        None => (best.expect("at least one trial").spec, false),
    };

    let (row, model) = trial(train_set, test_set, chosen, cfg.final_ratio, &cfg.train)?;
    rows.push(row);
    Ok(SweepOutcome { rows, chosen, perfect, model })
}
