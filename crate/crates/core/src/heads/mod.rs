//! Task heads (DistMult link prediction, softmax node classification),
//! negative sampling and training.

mod classify;
mod distmult;
mod sampling;
mod train;

pub use classify::{argmax_rows, nc_loss, Classifier};
pub use distmult::{distmult_score, DistMult};
pub use sampling::{cns_sample, corrupt_sample, pair_key, SamplerKind};
pub use train::{
    class_loss, evaluate_class, evaluate_link, link_loss, train_class, train_link, EpochRecord, Head, LinkBatch,
    LinkTask, Model, NodeTask, TrainConfig,
};

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::metrics::MetricsError;
use crate::tensor::{TensorError, PROB_CLIP};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("not enough negative candidates for label #{label}: need {needed}, have {available}")]
    TooFewCandidates { label: usize, needed: usize, available: usize },
    #[error("label `{0}` has no edges in the task supervertex")]
    NoPositives(String),
    #[error("node #{node} is outside the task supervertex ({len} nodes)")]
    NodeOutOfRange { node: usize, len: usize },
    #[error("node #{node} has conflicting classes `{first}` and `{second}`")]
    ConflictingClass { node: usize, first: String, second: String },
    #[error("classification needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("model head does not match the task")]
    WrongHead,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid training settings: {0}")]
    BadTrainConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Summed binary cross-entropy of positive and negative probabilities,
/// clipped to `[PROB_CLIP, 1 - PROB_CLIP]`.
pub fn lp_loss(positive: &[f64], negative: &[f64]) -> f64 {
    let clip = |p: f64| p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    -positive.iter().map(|&p| clip(p).ln()).sum::<f64>() - negative.iter().map(|&p| (1.0 - clip(p)).ln()).sum::<f64>()
}
