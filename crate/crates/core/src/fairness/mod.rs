//! Fair and robust binary classification.
//!
//! Four trainers share one network, optimiser and batching schedule:
//! plain risk minimisation, feature-space adversarial training, CAPIFY
//! (regularised with the true model's twins and latent perturbations) and
//! ECAPIFY (regularised with twins estimated from a learned metric).
//! Evaluation always uses the oracle model.

mod classifier;
mod data;
mod eval;
mod regularizers;
mod train;
mod twins;

pub use classifier::{bce_loss, Classifier, Predictor, PROB_CLAMP};
pub use data::{synthetic_labels, LabeledDataset, LABEL_NOISE_VARIANCE};
pub use eval::{
    audit_individual_fairness, eval_fairness, AuditReport, FairnessReport, DEFAULT_EVAL_DELTA,
    DEFAULT_PROBES,
};
pub use regularizers::{
    bce_batch, capify_gamma_at, capify_regularizer, ecapify_regularizer, ecapify_terms, pgd_feature,
    CapifyPoint, EcapifyTerms, RegularizerWeights,
};
pub use train::{
    train_classifier, ClassifierEpoch, ClassifierTrainLog, Method, TrainerConfig, TwinSource,
};
pub use twins::{estimate_twins, Embedder, TwinEstimator};

use crate::learning::LearningError;
use crate::metric::MetricError;
use crate::nn::NnError;
use crate::scm::ScmError;

#[derive(Debug, thiserror::Error)]
pub enum FairnessError {
    #[error("empty test set")]
    EmptyTestSet,
    #[error("empty training split")]
    EmptyTrainSet,
    #[error("no pool members at sensitive level {0:?}")]
    MissingLevel(Vec<f64>),
    #[error("instance sensitive values {0:?} are not a declared level")]
    UnknownLevel(Vec<f64>),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0:?} training needs {1}")]
    MissingInput(Method, &'static str),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Learning(#[from] LearningError),
}
