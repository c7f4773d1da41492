//! Metric learning from oracle supervision.
//!
//! Three supervision regimes are supported: pairs tagged with the oracle
//! distance (Huber regression), pairs tagged with a similar/dissimilar label
//! (contrastive loss), and anchor/positive/negative triplets (triplet loss).
//! An optional penalty pushes the embedding coordinates towards mutual
//! independence using a smoothed XIcor matrix.

mod data;
mod eval;
mod losses;
mod train;
mod xicor;

pub use data::{
    build_pairs, build_triplets, read_pairs, read_triplets, write_pairs, write_triplets,
    PairExample, PairMode, TripletExample, TWIN_PROBABILITY,
};
pub use eval::{confusion, eval_metric, mcc, Confusion, MetricReport};
pub use losses::{
    contrastive_grad, contrastive_loss, huber_grad, huber_loss, triplet_grad, triplet_loss,
    DEFAULT_HUBER_DELTA,
};
pub use train::{
    train_metric, EmbeddingKnowledge, EpochLog, LearnedMetric, MetricData, MetricTrainConfig,
    Objective, ObjectiveValue, Scale, Scenario, TrainLog,
};
pub use xicor::{
    decorrelation_penalty, decorrelation_penalty_grad, soft_xicor, xicor, DEFAULT_TEMPERATURE,
};

use crate::metric::MetricError;
use crate::nn::NnError;
use crate::scm::ScmError;

#[derive(Debug, thiserror::Error)]
pub enum LearningError {
    #[error("Huber threshold must be positive, got {0}")]
    NonpositiveDelta(f64),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("embedding coordinate {0} is constant over the batch")]
    DegenerateBatch(usize),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training data does not match the {0:?} scenario")]
    DataMismatch(Scenario),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
