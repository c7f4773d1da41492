//! Classifier trainers.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::classifier::rows_matrix;
use super::regularizers::{bce_batch, capify_regularizer, ecapify_regularizer, pgd_feature};
use super::twins::{Embedder, TwinEstimator};
use super::{CapifyPoint, Classifier, FairnessError, LabeledDataset, RegularizerWeights};
use crate::metric::OracleMetric;
use crate::nn::{Adam, AdamConfig};
use crate::rng;
use crate::scm::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Erm,
    Al,
    Capify,
    Ecapify,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Erm, Method::Al, Method::Capify, Method::Ecapify];

    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "ERM",
            Method::Al => "AL",
            Method::Capify => "CAPIFY",
            Method::Ecapify => "ECAPIFY",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub method: Method,
    pub delta: f64,
    pub mu: RegularizerWeights,
    pub pgd_steps: usize,
    /// Defaults to `Δ/4`.
    pub pgd_step_size: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            method: Method::Erm,
            delta: 0.01,
            mu: RegularizerWeights::default(),
            pgd_steps: 10,
            pgd_step_size: None,
            epochs: 30,
            batch_size: 64,
            hidden: vec![32, 32],
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn step_size(&self) -> f64 {
        self.pgd_step_size.unwrap_or(self.delta / 4.0)
    }

    fn validate(&self) -> Result<(), FairnessError> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(FairnessError::Config(format!("Δ must be non-negative, got {}", self.delta)));
        }
        if self.batch_size == 0 {
            return Err(FairnessError::Config("batch size must be positive".into()));
        }
        if !(self.step_size() >= 0.0) {
            return Err(FairnessError::Config("PGD step must be non-negative".into()));
        }
        self.mu.validate()
    }
}

/// Where the fairness regularizers get their twins.
pub enum TwinSource<'a> {
    /// The true model (CAPIFY).
    Oracle(&'a OracleMetric),
    /// Estimated twins for each training instance, in `data.train` order
    /// (ECAPIFY).
    Estimated(Vec<Vec<Instance>>),
}

impl TwinSource<'_> {
    /// Nearest-neighbour twins of every training instance among the training
    /// instances, grouped by the sensitive values observed in them.
    pub fn estimate<E: Embedder + ?Sized>(
        embedder: &E,
        sensitive: &[usize],
        data: &LabeledDataset,
    ) -> Result<Self, FairnessError> {
        let pool = data.train_instances();
        let levels = TwinEstimator::<E>::levels_in(&pool, sensitive);
        let est = TwinEstimator::new(embedder, sensitive, &levels, &pool)?;
        Ok(TwinSource::Estimated(est.estimate_batch(&pool)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub bce: f64,
    pub regularizer: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainLog {
    pub epochs: Vec<ClassifierEpoch>,
}

/// Minibatch Adam on cross-entropy plus the method's regularizer. Every
/// method shares initialisation and batch order for a given seed, so ERM,
/// AL at `Δ = 0`, and CAPIFY / ECAPIFY with zero weights produce identical
/// parameters.
pub fn train_classifier(
    data: &LabeledDataset,
    cfg: &TrainerConfig,
    source: Option<&TwinSource<'_>>,
) -> Result<(Classifier, ClassifierTrainLog), FairnessError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(FairnessError::EmptyTrainSet);
    }
    let n = data.instances[data.train[0]].len();
    let train_x = data.train_instances();
    let train_y = data.train_labels();

    let regularize = matches!(cfg.method, Method::Capify | Method::Ecapify) && !cfg.mu.is_zero();
    let mut capify_points = Vec::new();
    let mut oracle = None;
    let mut est_twins: &[Vec<Instance>] = &[];
    if regularize {
        match (cfg.method, source) {
            (Method::Capify, Some(TwinSource::Oracle(o))) => {
                capify_points = train_x
                    .iter()
                    .zip(&train_y)
                    .map(|(v, &y)| CapifyPoint::new(o.scm(), v, y))
                    .collect::<Result<_, _>>()?;
                oracle = Some(*o);
            }
            (Method::Capify, _) => return Err(FairnessError::MissingInput(cfg.method, "the oracle model")),
            (Method::Ecapify, Some(TwinSource::Estimated(t))) => {
                if t.len() != train_x.len() {
                    return Err(FairnessError::LengthMismatch(train_x.len(), t.len()));
                }
                est_twins = t;
            }
            _ => return Err(FairnessError::MissingInput(cfg.method, "estimated twins")),
        }
    }

    let mut clf = Classifier::new(n, &cfg.hidden, rng::derive_seed(cfg.seed, "classifier-init"))?;
    let mut adam = Adam::new(clf.net.parameter_count(), cfg.adam);
    let mut params = clf.net.flatten_params();
    let mut shuffle = rng::stream(cfg.seed, "classifier-shuffle");
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut log = ClassifierTrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut sum_bce, mut sum_reg, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<Instance> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let y: Vec<f64> = chunk.iter().map(|&i| f64::from(train_y[i])).collect();
            let mut x = rows_matrix(&rows);
            if cfg.method == Method::Al {
                x = pgd_feature(&clf.net, &x, &y, cfg.delta, cfg.pgd_steps, cfg.step_size())?;
            }
            let (bce, mut grads) = bce_batch(&clf.net, &x, &y)?;
            let mut reg = 0.0;
            if regularize {
                let (v, g) = match cfg.method {
                    Method::Capify => {
                        let pts: Vec<CapifyPoint> = chunk.iter().map(|&i| capify_points[i].clone()).collect();
                        let (v, g, _) = capify_regularizer(
                            oracle.expect("checked above"),
                            &clf.net,
                            &pts,
                            &cfg.mu,
                            cfg.delta,
                            cfg.pgd_steps,
                            cfg.step_size(),
                        )?;
                        (v, g)
                    }
                    _ => {
                        let twins: Vec<Vec<Instance>> = chunk.iter().map(|&i| est_twins[i].clone()).collect();
                        let labels: Vec<u8> = chunk.iter().map(|&i| train_y[i]).collect();
                        ecapify_regularizer(&clf.net, &twins, &labels, &cfg.mu, cfg.delta)?
                    }
                };
                grads.add_scaled(&g, 1.0);
                reg = v;
            }
            adam.step(&mut params, &grads.flatten())?;
            clf.net.assign_params(&params)?;
            sum_bce += bce;
            sum_reg += reg;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        log.epochs.push(ClassifierEpoch {
            epoch,
            loss: (sum_bce + sum_reg) / b,
            bce: sum_bce / b,
            regularizer: sum_reg / b,
        });
        log::debug!("{} epoch {epoch}: loss {:.6}", cfg.method, (sum_bce + sum_reg) / b);
    }
    Ok((clf, log))
}
