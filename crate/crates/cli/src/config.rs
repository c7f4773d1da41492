//! Experiment configuration files.

use std::path::{Path, PathBuf};

use cfm_core::fairness::{Method, TrainerConfig};
use cfm_core::learning::{EmbeddingKnowledge, MetricTrainConfig, Scale, Scenario};
use cfm_core::scm::{ScmSpec, FitSpec};
use cfm_core::BaseMetric;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GenData,
    TrainMetric,
    EvalMetric,
    TrainClf,
    EvalClf,
    Report,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::GenData => "gen-data",
            Task::TrainMetric => "train-metric",
            Task::EvalMetric => "eval-metric",
            Task::TrainClf => "train-clf",
            Task::EvalClf => "eval-clf",
            Task::Report => "report",
        }
    }

    pub fn is_metric(self) -> bool {
        matches!(self, Task::TrainMetric | Task::EvalMetric)
    }

    pub fn is_classifier(self) -> bool {
        matches!(self, Task::TrainClf | Task::EvalClf | Task::Report)
    }
}

/// A single value or a list, so `"seed": 0` and `"seeds": [0, 1]` both work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "euclidean")]
    pub base: BaseMetric,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { base: euclidean() }
    }
}

fn euclidean() -> BaseMetric {
    BaseMetric::Euclidean
}

/// Fields applied on top of the scale preset for metric training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOverrides {
    pub examples: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub margin: Option<f64>,
    pub lambda_dec: Option<f64>,
    pub embedding: Option<EmbeddingKnowledge>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub huber_delta: Option<f64>,
    pub temperature: Option<f64>,
    pub lr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by `cfm run`; the named subcommands set it themselves.
    #[serde(default)]
    pub task: Option<Task>,
    pub scm: OneOrMany<ScmSpec>,
    #[serde(default)]
    pub metric: MetricSpec,
    /// Instances per generated dataset.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_scenario")]
    pub scenario: OneOrMany<Scenario>,
    #[serde(default = "default_method")]
    pub method: OneOrMany<Method>,
    /// Defaults to 0.1 for metric tasks and 0.01 for classifier tasks.
    #[serde(default)]
    pub delta: Option<OneOrMany<f64>>,
    #[serde(default = "default_seeds", alias = "seed")]
    pub seeds: OneOrMany<u64>,
    #[serde(default = "default_preset")]
    pub preset: Scale,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub metric_train: MetricOverrides,
    /// Radius used to train the metric behind ECAPIFY's estimated twins.
    #[serde(default = "default_metric_delta")]
    pub metric_delta: f64,
    /// Classifier trainer settings; method, Δ and seed come from the cell.
    #[serde(default)]
    pub classifier: TrainerConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Fresh oracle-tagged pairs for metric evaluation.
    #[serde(default = "default_test_pairs")]
    pub test_pairs: usize,
    /// Ball probes per test point in fairness evaluation.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Checkpoint to evaluate instead of the one a train task would write.
    /// Only valid for a single-cell evaluation.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Tagged-pair CSV to evaluate a metric on.
    #[serde(default)]
    pub pairs: Option<PathBuf>,
}

fn default_count() -> usize {
    2000
}
fn default_scenario() -> OneOrMany<Scenario> {
    OneOrMany::One(Scenario::Distance)
}
fn default_method() -> OneOrMany<Method> {
    OneOrMany::Many(Method::ALL.to_vec())
}
fn default_seeds() -> OneOrMany<u64> {
    OneOrMany::One(0)
}
fn default_preset() -> Scale {
    Scale::Desk
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_metric_delta() -> f64 {
    0.1
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_test_pairs() -> usize {
    1000
}
fn default_probes() -> usize {
    cfm_core::fairness::DEFAULT_PROBES
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub output: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub preset: Option<Scale>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
            _ => CliError::Io(e),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(t) = o.task {
            self.task = Some(t);
        }
        if let Some(p) = &o.output {
            self.output = p.clone();
        }
        if !o.seeds.is_empty() {
            self.seeds = OneOrMany::Many(o.seeds.clone());
        }
        if let Some(s) = o.preset {
            self.preset = s;
        }
    }

    pub fn task(&self) -> Result<Task, CliError> {
        self.task
            .ok_or_else(|| CliError::Config("no task given in the config or on the command line".into()))
    }

    pub fn deltas(&self) -> Vec<f64> {
        match &self.delta {
            Some(d) => d.to_vec(),
            None if self.task.is_some_and(Task::is_metric) => vec![0.1],
            None => vec![cfm_core::fairness::DEFAULT_EVAL_DELTA],
        }
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let task = self.task()?;
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.to_vec().is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.scm.to_vec().is_empty() {
            return bad("at least one scm is required".into());
        }
        if self.scenario.to_vec().is_empty() || self.method.to_vec().is_empty() {
            return bad("scenario and method lists must be nonempty".into());
        }
        let deltas = self.deltas();
        if deltas.is_empty() {
            return bad("delta list must be nonempty".into());
        }
        if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return bad(format!("Δ must be finite and non-negative, got {d}"));
        }
        if task.is_metric() && deltas.contains(&0.0) {
            return bad("metric tasks need Δ > 0".into());
        }
        if self.count < 2 {
            return bad(format!("count must be at least 2, got {}", self.count));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.test_pairs == 0 {
            return bad("test_pairs must be positive".into());
        }
        if !(self.metric_delta > 0.0 && self.metric_delta.is_finite()) {
            return bad(format!("metric_delta must be positive, got {}", self.metric_delta));
        }
        for spec in self.scm.to_vec() {
            if let ScmSpec::Fit { fit: FitSpec { csv, .. } } = spec {
                require_file(&csv)?;
            }
        }
        if let Some(p) = &self.model {
            require_file(p)?;
        }
        if let Some(p) = &self.pairs {
            require_file(p)?;
        }
        Ok(())
    }

    /// Preset for one metric-training cell with the file's overrides applied.
    pub fn metric_train_config(&self, scenario: Scenario, delta: f64, seed: u64) -> MetricTrainConfig {
        let mut c = MetricTrainConfig::preset(self.preset, scenario, delta, seed);
        let o = &self.metric_train;
        if let Some(v) = o.examples {
            c.examples = v;
        }
        if let Some(v) = o.epochs {
            c.epochs = v;
        }
        if let Some(v) = o.batch_size {
            c.batch_size = v;
        }
        if o.margin.is_some() {
            c.margin = o.margin;
        }
        if let Some(v) = o.lambda_dec {
            c.lambda_dec = v;
        }
        if let Some(v) = o.embedding {
            c.embedding = v;
        }
        if let Some(v) = o.depth {
            c.depth = v;
        }
        if let Some(v) = o.width {
            c.width = v;
        }
        if let Some(v) = o.huber_delta {
            c.huber_delta = v;
        }
        if let Some(v) = o.temperature {
            c.temperature = v;
        }
        if let Some(v) = o.lr {
            c.adam.lr = v;
        }
        c
    }

    pub fn trainer_config(&self, method: Method, delta: f64, seed: u64) -> TrainerConfig {
        TrainerConfig {
            method,
            delta,
            seed,
            ..self.classifier.clone()
        }
    }
}

fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile(p.to_path_buf()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(r#"{"task": "train-clf", "scm": {"builtin": "lin"}}"#).unwrap();
        assert_eq!(c.seeds.to_vec(), vec![0]);
        assert_eq!(c.method.to_vec(), Method::ALL.to_vec());
        assert_eq!(c.deltas(), vec![0.01]);
        assert_eq!(c.preset, Scale::Desk);
        c.validate().unwrap();
    }

    #[test]
    fn singular_and_plural_forms() {
        let c = ExperimentConfig::parse(
            r#"{"task": "train-metric", "scm": [{"builtin": "lin"}, {"builtin": "nlm"}],
                "seed": 3, "scenario": ["label", "triplet"], "delta": 0.2}"#,
        )
        .unwrap();
        assert_eq!(c.scm.to_vec().len(), 2);
        assert_eq!(c.seeds.to_vec(), vec![3]);
        assert_eq!(c.scenario.to_vec(), vec![Scenario::Label, Scenario::Triplet]);
        assert_eq!(c.deltas(), vec![0.2]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ExperimentConfig::parse("{"), Err(CliError::ConfigParse(_))));
        assert!(matches!(
            ExperimentConfig::parse(r#"{"scm": {"builtin": "lin"}, "sedes": [1]}"#),
            Err(CliError::ConfigParse(_))
        ));
        let c = ExperimentConfig::parse(r#"{"task": "report", "scm": {"builtin": "lin"}, "seeds": []}"#).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let c = ExperimentConfig::parse(r#"{"scm": {"builtin": "lin"}}"#).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let c = ExperimentConfig::parse(r#"{"task": "eval-clf", "scm": {"builtin": "lin"}, "model": "/nonexistent.json"}"#)
            .unwrap();
        assert!(matches!(c.validate(), Err(CliError::MissingFile(_))));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::parse(r#"{"task": "gen-data", "scm": {"builtin": "lin"}, "seeds": [1, 2]}"#).unwrap();
        c.apply(&Overrides {
            task: Some(Task::Report),
            output: Some("elsewhere".into()),
            seeds: vec![9],
            preset: Some(Scale::Paper),
        });
        assert_eq!(c.task, Some(Task::Report));
        assert_eq!(c.seeds.to_vec(), vec![9]);
        assert_eq!(c.output, PathBuf::from("elsewhere"));
        let m = c.metric_train_config(Scenario::Distance, 0.1, 9);
        assert_eq!((m.examples, m.batch_size, m.epochs), Scale::Paper.sizes());
    }
}
