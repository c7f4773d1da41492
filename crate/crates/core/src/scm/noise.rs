use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Distribution of one exogenous variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDist {
    /// Values in {0, 1}.
    Bernoulli { p: f64 },
    Normal { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
}

impl NoiseDist {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            NoiseDist::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseDist::Normal { mean, variance } => {
                if variance <= 0.0 {
                    return mean;
                }
                Normal::new(mean, variance.sqrt())
                    .expect("finite positive standard deviation")
                    .sample(rng)
            }
            NoiseDist::Uniform { low, high } => rng.random_range(low..high),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, NoiseDist::Bernoulli { .. })
    }

    /// Support points of a discrete distribution.
    pub fn atoms(&self) -> Option<Vec<f64>> {
        match self {
            NoiseDist::Bernoulli { .. } => Some(vec![0.0, 1.0]),
            _ => None,
        }
    }
}
