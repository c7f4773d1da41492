//! Sigmoid-output classifier and the clamped cross-entropy.

use crate::nn::{DenseMatrix, FeedForwardNet, NnError};
use crate::scm::Instance;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Cross-entropy of a logit with its first and second derivatives in the
/// logit. Both derivatives vanish where the clamp is active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LogitLoss {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub(crate) fn logit_loss(z: f64, y: f64) -> LogitLoss {
    let p = sigmoid(z);
    let value = bce_loss(p, u8::from(y > 0.5));
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return LogitLoss { value, d1: 0.0, d2: 0.0 };
    }
    LogitLoss {
        value,
        d1: p - y,
        d2: p * (1.0 - p),
    }
}

/// Anything that maps an instance to a probability of the positive class.
pub trait Predictor {
    fn probability(&self, v: &[f64]) -> f64;

    fn probabilities(&self, rows: &[Instance]) -> Vec<f64> {
        rows.iter().map(|r| self.probability(r)).collect()
    }

    fn predict(&self, v: &[f64]) -> u8 {
        u8::from(self.probability(v) > 0.5)
    }
}

impl<F: Fn(&[f64]) -> f64> Predictor for F {
    fn probability(&self, v: &[f64]) -> f64 {
        self(v)
    }
}

/// Feed-forward network with one logit output, thresholded at 0.5 after the
/// sigmoid.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub net: FeedForwardNet,
}

impl Classifier {
    /// `[n, hidden.., 1]`.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self, NnError> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(Self {
            net: FeedForwardNet::new(&widths, seed)?,
        })
    }

    pub fn from_net(net: FeedForwardNet) -> Result<Self, NnError> {
        if net.output_dim() != 1 {
            return Err(NnError::InvalidArgument(format!(
                "classifier needs one output, network has {}",
                net.output_dim()
            )));
        }
        Ok(Self { net })
    }

    pub fn logits(&self, x: &DenseMatrix) -> Result<Vec<f64>, NnError> {
        Ok(self.net.forward(x)?.into_vec())
    }

    pub fn to_json(&self) -> String {
        crate::nn::Checkpoint::from_net(&self.net).to_json()
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        Self::from_net(crate::nn::Checkpoint::from_json(s)?.into_net()?)
    }
}

pub(crate) fn rows_matrix(rows: &[Instance]) -> DenseMatrix {
    let n = rows.first().map_or(0, |r| r.len());
    DenseMatrix::from_vec(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied()).collect())
        .expect("rows share one length")
}

impl Predictor for Classifier {
    fn probability(&self, v: &[f64]) -> f64 {
        sigmoid(self.net.forward_one(v).expect("input width matches")[0])
    }

    fn probabilities(&self, rows: &[Instance]) -> Vec<f64> {
        if rows.is_empty() {
            return Vec::new();
        }
        self.logits(&rows_matrix(rows))
            .expect("input width matches")
            .into_iter()
            .map(sigmoid)
            .collect()
    }
}
