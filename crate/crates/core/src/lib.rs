//! Causal fair metrics over structural causal models.
//!
//! The crate is organised bottom-up:
//!
//! - [`scm`]: structural causal models, abduction, interventions, counterfactual
//!   twins and the semi-latent representation.
//! - [`metric`]: the oracle causal fair metric and protected causal perturbation
//!   (PCP) balls.
//! - [`nn`]: dense matrices, a PReLU feed-forward network with manual
//!   backpropagation, Adam, and norm diagnostics.
//! - [`learning`]: supervision builders, the distance / label / triplet metric
//!   learning scenarios, XIcor decorrelation and metric evaluation.
//! - [`fairness`]: ERM, adversarial, CAPIFY and ECAPIFY classifier training plus
//!   fairness and robustness evaluation.

pub mod fairness;
pub mod learning;
pub mod metric;
pub mod nn;
pub mod rng;
pub mod scm;

pub use metric::{BaseMetric, OracleMetric, PcpBall};
pub use nn::{DenseMatrix, FeedForwardNet};
pub use scm::{ExogenousPoint, Instance, Intervention, Scm, SemiLatentPoint};
