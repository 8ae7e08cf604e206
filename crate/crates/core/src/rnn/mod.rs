//! Recurrent classifier for short transients in multi-channel torque logs.
//!
//! A window of `n_pre` samples before, the peak sample, and `n_post` after is
//! fed one row at a time through a tanh recurrence with a hidden state as wide
//! as the input; a softmax over the final state gives
//! `[p(transient), p(no transient)]`.

mod data;
mod detect;
mod model;
mod sweep;
mod synth;
mod train;

use thiserror::Error;

pub use data::{
    extract_windows, negative_windows, positive_window, Label, LabeledDataset, LabeledWindow, Recording, WindowSpec,
};
pub use detect::{detect_stream, Detection, DEFAULT_REFRACTORY};
pub use model::{gradients, loss, Forward, Layout, Normalizer, ParamSet, RnnModel, LOG_CLAMP};
pub use sweep::{sweep_window, SweepConfig, SweepOutcome, SweepRow};
pub use synth::{synth_quiet, synth_transients, transient_shape, SynthConfig};
pub use train::{evaluate, train, Adam, DetectorMetrics, TrainConfig, Trained};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RnnError {
    #[error("window has {got} values, expected {expected}")]
    SeqShape { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no recordings")]
    NoData,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("non-finite value")]
    NonFinite,
}
