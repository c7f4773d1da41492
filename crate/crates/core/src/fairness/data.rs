//! Labelled datasets with a fixed train/test split.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::rng;
use crate::scm::{Instance, Scm};

/// Variance of the Gaussian jitter added before thresholding synthetic labels.
pub const LABEL_NOISE_VARIANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub instances: Vec<Instance>,
    pub labels: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `y = 1[x_a + x_b + ε > median]` over the first two non-sensitive
/// features, `ε ~ Normal(0, 0.01)`.
pub fn synthetic_labels(scm: &Scm, instances: &[Instance], seed: u64) -> Vec<u8> {
    let ns = scm.non_sensitive();
    let cols: Vec<usize> = ns.iter().copied().take(2).collect();
    let noise = Normal::new(0.0, LABEL_NOISE_VARIANCE.sqrt()).expect("valid normal");
    let mut rng = rng::stream(seed, "labels");
    let scores: Vec<f64> = instances
        .iter()
        .map(|v| cols.iter().map(|&c| v[c]).sum::<f64>() + noise.sample(&mut rng))
        .collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    scores.iter().map(|&s| u8::from(s > median)).collect()
}

impl LabeledDataset {
    pub fn new(
        instances: Vec<Instance>,
        labels: Vec<u8>,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self, FairnessError> {
        if instances.len() != labels.len() {
            return Err(FairnessError::LengthMismatch(instances.len(), labels.len()));
        }
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(FairnessError::Config(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(FairnessError::Config("labels must be 0 or 1".into()));
        }
        let mut idx: Vec<usize> = (0..instances.len()).collect();
        idx.shuffle(&mut rng::stream(seed, "split"));
        let n_test = (instances.len() as f64 * test_fraction).round() as usize;
        let test = idx.split_off(instances.len() - n_test);
        Ok(Self {
            instances,
            labels,
            train: idx,
            test,
        })
    }

    /// Sample `count` instances from the model and label them synthetically.
    pub fn synthetic(scm: &Scm, count: usize, test_fraction: f64, seed: u64) -> Result<Self, FairnessError> {
        let instances: Vec<Instance> = scm
            .sample(count, rng::derive_seed(seed, "classifier-data"))
            .into_iter()
            .map(|(v, _)| v)
            .collect();
        let labels = synthetic_labels(scm, &instances, seed);
        Self::new(instances, labels, test_fraction, seed)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn train_instances(&self) -> Vec<Instance> {
        self.train.iter().map(|&i| self.instances[i].clone()).collect()
    }

    pub fn test_instances(&self) -> Vec<Instance> {
        self.test.iter().map(|&i| self.instances[i].clone()).collect()
    }

    pub fn train_labels(&self) -> Vec<u8> {
        self.train.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn test_labels(&self) -> Vec<u8> {
        self.test.iter().map(|&i| self.labels[i]).collect()
    }
}
