//! Dense linear algebra, a PReLU feed-forward network, Adam, and norm
//! diagnostics.

mod adam;
mod matrix;
mod net;
mod norms;

pub use adam::{Adam, AdamConfig};
pub use matrix::{dot, l2_norm, DenseMatrix};
pub use net::{Backward, FeedForwardNet, Gradients, Trace, DEFAULT_PRELU_SLOPE};
pub use norms::{norm_2_1, rademacher_bound, spectral_norm, SPECTRAL_ITERS};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("no forward cache matches this backward call")]
    StaleCache,
    #[error("layer {layer} has zero spectral norm")]
    ZeroSpectralNorm { layer: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub const CHECKPOINT_VERSION: &str = "cfm-net-v1";

/// On-disk network format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub widths: Vec<usize>,
    /// Row-major weight arrays, one per layer (`d_i × d_{i-1}`).
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

impl Checkpoint {
    pub fn from_net(net: &FeedForwardNet) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            widths: net.widths().to_vec(),
            weights: net.weights().iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: net.biases().to_vec(),
            slopes: net.slopes().to_vec(),
        }
    }

    pub fn into_net(self) -> Result<FeedForwardNet, NnError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {:?}",
                self.version
            )));
        }
        if self.widths.len() != self.weights.len() + 1 {
            return Err(NnError::Checkpoint("widths do not match weight count".into()));
        }
        let weights = self
            .weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| DenseMatrix::from_vec(self.widths[i + 1], self.widths[i], w))
            .collect::<Result<Vec<_>, _>>()?;
        FeedForwardNet::from_parts(weights, self.biases, self.slopes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}
