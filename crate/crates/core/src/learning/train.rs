//! Embedding network training for the three supervision regimes.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{contrastive_grad, contrastive_loss, huber_grad, triplet_grad, triplet_loss};
use super::xicor::decorrelation_penalty_grad;
use super::{huber_loss, LearningError, PairExample, TripletExample, DEFAULT_HUBER_DELTA, DEFAULT_TEMPERATURE};
use crate::metric::{BaseMetric, InstanceMetric, MetricError, OracleMetric};
use crate::nn::{Adam, AdamConfig, Checkpoint, DenseMatrix, FeedForwardNet, Gradients};
use crate::rng;
use crate::scm::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Distance,
    Label,
    Triplet,
}

/// Whether the embedding dimension and base metric are taken from the
/// oracle (`Known`) or guessed as `⌈n/2⌉` with a Euclidean metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKnowledge {
    Known,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    /// `(examples, batch size, epochs)`.
    pub fn sizes(self) -> (usize, usize, usize) {
        match self {
            Scale::Desk => (2000, 200, 30),
            Scale::Paper => (10_000, 1000, 100),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricTrainConfig {
    pub scenario: Scenario,
    pub delta: f64,
    /// Number of training pairs or triplets to generate.
    pub examples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to `Δ` for labels and 0 for triplets.
    pub margin: Option<f64>,
    pub lambda_dec: f64,
    pub embedding: EmbeddingKnowledge,
    /// Number of hidden layers.
    pub depth: usize,
    pub width: usize,
    pub huber_delta: f64,
    pub temperature: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for MetricTrainConfig {
    fn default() -> Self {
        Self::preset(Scale::Desk, Scenario::Distance, 0.1, 0)
    }
}

impl MetricTrainConfig {
    pub fn preset(scale: Scale, scenario: Scenario, delta: f64, seed: u64) -> Self {
        let (examples, batch_size, epochs) = scale.sizes();
        Self {
            scenario,
            delta,
            examples,
            epochs,
            batch_size,
            margin: None,
            lambda_dec: 0.1,
            embedding: EmbeddingKnowledge::Known,
            depth: 5,
            width: 100,
            huber_delta: DEFAULT_HUBER_DELTA,
            temperature: DEFAULT_TEMPERATURE,
            adam: AdamConfig::default(),
            seed,
        }
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(match self.scenario {
            Scenario::Label => self.delta,
            _ => 0.0,
        })
    }

    /// Layer widths for a model over `n` features with `k` latent coordinates.
    pub fn widths(&self, n: usize, k: usize) -> Vec<usize> {
        let out = match self.embedding {
            EmbeddingKnowledge::Known => k,
            EmbeddingKnowledge::Unknown => n.div_ceil(2),
        };
        let mut w = vec![n];
        w.extend(std::iter::repeat_n(self.width, self.depth));
        w.push(out.max(1));
        w
    }

    pub fn embed_metric(&self, oracle: &OracleMetric) -> BaseMetric {
        match self.embedding {
            EmbeddingKnowledge::Known => oracle.base().clone(),
            EmbeddingKnowledge::Unknown => BaseMetric::Euclidean,
        }
    }

    fn validate(&self) -> Result<(), LearningError> {
        let bad = |m: &str| Err(LearningError::Config(m.to_string()));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("Δ must be positive");
        }
        if self.batch_size == 0 || self.width == 0 {
            return bad("batch size and width must be positive");
        }
        if self.margin() < 0.0 || self.lambda_dec < 0.0 {
            return bad("margin and decorrelation weight must be non-negative");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.huber_delta > 0.0) {
            return Err(LearningError::NonpositiveDelta(self.huber_delta));
        }
        Ok(())
    }
}

/// A frozen embedding network and the metric applied to its outputs.
#[derive(Clone, Debug)]
pub struct LearnedMetric {
    pub net: FeedForwardNet,
    pub embed_metric: BaseMetric,
}

#[derive(Serialize, Deserialize)]
struct LearnedMetricFile {
    net: Checkpoint,
    embed_metric: BaseMetric,
}

impl LearnedMetric {
    pub fn embed(&self, v: &[f64]) -> Result<Vec<f64>, LearningError> {
        Ok(self.net.forward_one(v)?)
    }

    pub fn embed_batch(&self, rows: &[Instance]) -> Result<DenseMatrix, LearningError> {
        Ok(self.net.forward(&stack(rows.iter().map(|r| &r.values[..]), self.net.input_dim())?)?)
    }

    pub fn distance(&self, v: &[f64], w: &[f64]) -> Result<f64, LearningError> {
        Ok(self.embed_metric.distance(&self.embed(v)?, &self.embed(w)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LearnedMetricFile {
            net: Checkpoint::from_net(&self.net),
            embed_metric: self.embed_metric.clone(),
        })
        .expect("learned metric serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, LearningError> {
        let f: LearnedMetricFile = serde_json::from_str(s)
            .map_err(|e| LearningError::Config(format!("learned metric: {e}")))?;
        Ok(Self {
            net: f.net.into_net()?,
            embed_metric: f.embed_metric,
        })
    }
}

impl InstanceMetric for LearnedMetric {
    fn instance_distance(&self, v: &[f64], w: &[f64]) -> Result<f64, MetricError> {
        let e = |x: &[f64]| {
            self.net
                .forward_one(x)
                .map_err(|e| MetricError::InvalidBase(e.to_string()))
        };
        Ok(self.embed_metric.distance(&e(v)?, &e(w)?))
    }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, n: usize) -> Result<DenseMatrix, LearningError> {
    let mut data = Vec::new();
    let mut count = 0;
    for r in rows {
        if r.len() != n {
            return Err(LearningError::LengthMismatch(n, r.len()));
        }
        data.extend_from_slice(r);
        count += 1;
    }
    Ok(DenseMatrix::from_vec(count, n, data)?)
}

/// Training examples for one scenario.
#[derive(Clone, Debug)]
pub enum MetricData {
    Pairs(Vec<PairExample>),
    Triplets(Vec<TripletExample>),
}

impl MetricData {
    pub fn len(&self) -> usize {
        match self {
            MetricData::Pairs(p) => p.len(),
            MetricData::Triplets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked inputs (blocks of first, second[, third] members) and targets
    /// for the selected examples.
    pub fn batch(&self, idx: &[usize], n: usize) -> Result<(DenseMatrix, Vec<f64>), LearningError> {
        match self {
            MetricData::Pairs(p) => {
                let rows = idx
                    .iter()
                    .map(|&i| &p[i].a.values[..])
                    .chain(idx.iter().map(|&i| &p[i].b.values[..]));
                Ok((stack(rows, n)?, idx.iter().map(|&i| p[i].tag).collect()))
            }
            MetricData::Triplets(t) => {
                let rows = idx
                    .iter()
                    .map(|&i| &t[i].anchor.values[..])
                    .chain(idx.iter().map(|&i| &t[i].positive.values[..]))
                    .chain(idx.iter().map(|&i| &t[i].negative.values[..]));
                Ok((stack(rows, n)?, Vec::new()))
            }
        }
    }
}

/// Scenario loss plus weighted decorrelation penalty on one stacked batch.
#[derive(Clone, Debug)]
pub struct Objective {
    pub scenario: Scenario,
    pub margin: f64,
    pub huber_delta: f64,
    pub lambda_dec: f64,
    pub temperature: f64,
    pub embed_metric: BaseMetric,
}

/// Loss components of one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub task: f64,
    pub decorrelation: f64,
}

impl Objective {
    pub fn from_config(cfg: &MetricTrainConfig, embed_metric: BaseMetric) -> Self {
        Self {
            scenario: cfg.scenario,
            margin: cfg.margin(),
            huber_delta: cfg.huber_delta,
            lambda_dec: cfg.lambda_dec,
            temperature: cfg.temperature,
            embed_metric,
        }
    }

    /// Value and gradient with respect to the stacked embeddings.
    pub fn embedding_grad(
        &self,
        emb: &DenseMatrix,
        targets: &[f64],
    ) -> Result<(ObjectiveValue, DenseMatrix), LearningError> {
        let blocks = match self.scenario {
            Scenario::Triplet => 3,
            _ => 2,
        };
        let b = emb.rows() / blocks;
        let mut grad = DenseMatrix::zeros(emb.rows(), emb.cols());
        let mut task = 0.0;
        let inv = 1.0 / b as f64;
        let m = &self.embed_metric;
        let push = |grad: &mut DenseMatrix, i: usize, j: usize, scale: f64| {
            if scale == 0.0 {
                return;
            }
            let g = m.gradient(emb.row(i), emb.row(j));
            for (c, gc) in g.iter().enumerate() {
                grad[(i, c)] += scale * gc;
                grad[(j, c)] -= scale * gc;
            }
        };
        for k in 0..b {
            match self.scenario {
                Scenario::Distance | Scenario::Label => {
                    let d = m.distance(emb.row(k), emb.row(b + k));
                    let (l, gd) = if self.scenario == Scenario::Distance {
                        (
                            huber_loss(d, targets[k], self.huber_delta)?,
                            huber_grad(d, targets[k], self.huber_delta),
                        )
                    } else {
                        let y = u8::from(targets[k] > 0.5);
                        (contrastive_loss(d, y, self.margin), contrastive_grad(d, y, self.margin))
                    };
                    task += l;
                    push(&mut grad, k, b + k, gd * inv);
                }
                Scenario::Triplet => {
                    let d_ap = m.distance(emb.row(k), emb.row(b + k));
                    let d_an = m.distance(emb.row(k), emb.row(2 * b + k));
                    task += triplet_loss(d_ap, d_an, self.margin);
                    let (g_ap, g_an) = triplet_grad(d_ap, d_an, self.margin);
                    push(&mut grad, k, b + k, g_ap * inv);
                    push(&mut grad, k, 2 * b + k, g_an * inv);
                }
            }
        }
        task *= inv;
        let mut decorrelation = 0.0;
        if self.lambda_dec > 0.0 && emb.rows() >= 4 {
            let (p, g) = decorrelation_penalty_grad(emb, self.temperature)?;
            decorrelation = p;
            for (a, gb) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += self.lambda_dec * gb;
            }
        }
        Ok((
            ObjectiveValue {
                total: task + self.lambda_dec * decorrelation,
                task,
                decorrelation,
            },
            grad,
        ))
    }

    /// Value and parameter gradients for a stacked input batch.
    pub fn net_grad(
        &self,
        net: &FeedForwardNet,
        inputs: &DenseMatrix,
        targets: &[f64],
    ) -> Result<(ObjectiveValue, Gradients), LearningError> {
        let trace = net.trace(inputs)?;
        let (value, g) = self.embedding_grad(trace.output(), targets)?;
        Ok((value, net.backward_trace(&trace, &g, None)?.params))
    }

    pub fn net_value(
        &self,
        net: &FeedForwardNet,
        inputs: &DenseMatrix,
        targets: &[f64],
    ) -> Result<f64, LearningError> {
        let emb = net.forward(inputs)?;
        Ok(self.embedding_grad(&emb, targets)?.0.total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub task_loss: f64,
    pub decorrelation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub const CSV_HEADER: [&'static str; 4] = ["epoch", "loss", "task_loss", "decorrelation"];
}

/// Minibatch Adam on the scenario loss plus `λ_dec` times the decorrelation
/// penalty. Deterministic for a fixed configuration.
pub fn train_metric(
    oracle: &OracleMetric,
    cfg: &MetricTrainConfig,
    data: &MetricData,
) -> Result<(LearnedMetric, TrainLog), LearningError> {
    cfg.validate()?;
    match (cfg.scenario, data) {
        (Scenario::Triplet, MetricData::Triplets(_))
        | (Scenario::Distance | Scenario::Label, MetricData::Pairs(_)) => {}
        _ => return Err(LearningError::DataMismatch(cfg.scenario)),
    }
    let scm = oracle.scm();
    let n = scm.node_count();
    let widths = cfg.widths(n, scm.non_sensitive().len());
    let embed_metric = cfg.embed_metric(oracle);
    if let Some(d) = embed_metric.dim() {
        if d != *widths.last().unwrap() {
            return Err(LearningError::Config(format!(
                "embedding metric expects {d} outputs, network has {}",
                widths.last().unwrap()
            )));
        }
    }
    let mut net = FeedForwardNet::new(&widths, rng::derive_seed(cfg.seed, "metric-init"))?;
    let objective = Objective::from_config(cfg, embed_metric.clone());
    let mut adam = Adam::new(net.parameter_count(), cfg.adam);
    let mut shuffle = rng::stream(cfg.seed, "metric-shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    let mut params = net.flatten_params();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut sums = ObjectiveValue::default();
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, targets) = data.batch(chunk, n)?;
            let (value, grads) = objective.net_grad(&net, &x, &targets)?;
            adam.step(&mut params, &grads.flatten())?;
            net.assign_params(&params)?;
            sums.total += value.total;
            sums.task += value.task;
            sums.decorrelation += value.decorrelation;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        log.epochs.push(EpochLog {
            epoch,
            loss: sums.total / b,
            task_loss: sums.task / b,
            decorrelation: sums.decorrelation / b,
        });
        log::debug!("epoch {epoch}: loss {:.6}", sums.total / b);
    }
    Ok((LearnedMetric { net, embed_metric }, log))
}
