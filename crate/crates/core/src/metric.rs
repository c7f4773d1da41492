//! Oracle causal fair metric and protected causal perturbation balls.
//!
//! The oracle distance between two instances is a base metric applied to
//! their non-sensitive semi-latent coordinates, so counterfactual twins sit
//! at distance zero. A PCP ball of radius `Δ` around `v` is the union over
//! sensitive levels of ordinary balls around the twins of `v`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::DenseMatrix;
use crate::rng;
use crate::scm::{Instance, Scm, ScmError, SemiLatentPoint};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("invalid base metric: {0}")]
    InvalidBase(String),
    #[error("base metric has dimension {base} but the model has {latent} non-sensitive coordinates")]
    DimensionMismatch { base: usize, latent: usize },
    #[error("radius must be finite and non-negative, got {0}")]
    InvalidRadius(f64),
    #[error("twin set requires a zero radius, got {0}")]
    NonzeroRadius(f64),
}

/// Metric on the non-sensitive exogenous subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaseMetricRepr", into = "BaseMetricRepr")]
pub enum BaseMetric {
    Euclidean,
    Weighted(Vec<f64>),
    /// `√(dᵀ Σ d)` with `Σ` symmetric positive semidefinite.
    Mahalanobis(DenseMatrix),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BaseMetricRepr {
    Euclidean,
    Weighted(Vec<f64>),
    Mahalanobis(Vec<Vec<f64>>),
}

impl TryFrom<BaseMetricRepr> for BaseMetric {
    type Error = MetricError;

    fn try_from(r: BaseMetricRepr) -> Result<Self, MetricError> {
        match r {
            BaseMetricRepr::Euclidean => Ok(BaseMetric::Euclidean),
            BaseMetricRepr::Weighted(w) => BaseMetric::weighted(w),
            BaseMetricRepr::Mahalanobis(rows) => BaseMetric::mahalanobis(
                DenseMatrix::from_rows(&rows).map_err(|e| MetricError::InvalidBase(e.to_string()))?,
            ),
        }
    }
}

impl From<BaseMetric> for BaseMetricRepr {
    fn from(b: BaseMetric) -> Self {
        match b {
            BaseMetric::Euclidean => BaseMetricRepr::Euclidean,
            BaseMetric::Weighted(w) => BaseMetricRepr::Weighted(w),
            BaseMetric::Mahalanobis(s) => {
                BaseMetricRepr::Mahalanobis((0..s.rows()).map(|i| s.row(i).to_vec()).collect())
            }
        }
    }
}

impl BaseMetric {
    pub fn weighted(w: Vec<f64>) -> Result<Self, MetricError> {
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(MetricError::InvalidBase("weights must be finite and ≥ 0".into()));
        }
        Ok(BaseMetric::Weighted(w))
    }

    pub fn mahalanobis(sigma: DenseMatrix) -> Result<Self, MetricError> {
        if !sigma.is_finite() || !sigma.is_positive_semidefinite() {
            return Err(MetricError::InvalidBase(
                "Σ must be symmetric positive semidefinite".into(),
            ));
        }
        Ok(BaseMetric::Mahalanobis(sigma))
    }

    /// Required input dimension, if the metric fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            BaseMetric::Euclidean => None,
            BaseMetric::Weighted(w) => Some(w.len()),
            BaseMetric::Mahalanobis(s) => Some(s.rows()),
        }
    }

    /// Squared distance, summed in coordinate order.
    pub fn squared(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            BaseMetric::Euclidean => {
                let mut s = 0.0;
                for (a, b) in x.iter().zip(y) {
                    s += (a - b) * (a - b);
                }
                s
            }
            BaseMetric::Weighted(w) => {
                let mut s = 0.0;
                for ((a, b), wi) in x.iter().zip(y).zip(w) {
                    s += wi * (a - b) * (a - b);
                }
                s
            }
            BaseMetric::Mahalanobis(sigma) => {
                let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                quadratic_form(sigma, &d).max(0.0)
            }
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.squared(x, y).sqrt()
    }

    /// `∂d(x, y)/∂x`; zero where the distance vanishes.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.distance(x, y);
        if d == 0.0 {
            return vec![0.0; x.len()];
        }
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        match self {
            BaseMetric::Euclidean => diff.iter().map(|v| v / d).collect(),
            BaseMetric::Weighted(w) => diff.iter().zip(w).map(|(v, wi)| wi * v / d).collect(),
            BaseMetric::Mahalanobis(sigma) => (0..diff.len())
                .map(|i| {
                    let mut s = 0.0;
                    for (j, dj) in diff.iter().enumerate() {
                        s += 0.5 * (sigma[(i, j)] + sigma[(j, i)]) * dj;
                    }
                    s / d
                })
                .collect(),
        }
    }

    /// Norm of a displacement.
    pub fn norm(&self, d: &[f64]) -> f64 {
        self.distance(d, &vec![0.0; d.len()])
    }
}

/// `dᵀ Σ d` with plain sequential sums.
pub fn quadratic_form(sigma: &DenseMatrix, d: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &di) in d.iter().enumerate() {
        let mut inner = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            inner += sigma[(i, j)] * dj;
        }
        total += di * inner;
    }
    total
}

/// Anything that measures distances between feature-space instances.
pub trait InstanceMetric {
    fn instance_distance(&self, v: &[f64], w: &[f64]) -> Result<f64, MetricError>;
}

impl InstanceMetric for OracleMetric {
    fn instance_distance(&self, v: &[f64], w: &[f64]) -> Result<f64, MetricError> {
        self.distance(v, w)
    }
}

/// `d(v, w) = d_X(φ_X(v), φ_X(w))`.
#[derive(Clone, Debug)]
pub struct OracleMetric {
    scm: Scm,
    base: BaseMetric,
}

impl OracleMetric {
    pub fn new(scm: Scm, base: BaseMetric) -> Result<Self, MetricError> {
        let latent = scm.non_sensitive().len();
        if let Some(d) = base.dim() {
            if d != latent {
                return Err(MetricError::DimensionMismatch { base: d, latent });
            }
        }
        Ok(Self { scm, base })
    }

    pub fn euclidean(scm: Scm) -> Self {
        Self {
            scm,
            base: BaseMetric::Euclidean,
        }
    }

    pub fn scm(&self) -> &Scm {
        &self.scm
    }

    pub fn base(&self) -> &BaseMetric {
        &self.base
    }

    /// Non-sensitive semi-latent coordinates `φ_X(v)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, MetricError> {
        Ok(self.scm.to_semilatent(v)?.latent)
    }

    pub fn distance(&self, v: &[f64], w: &[f64]) -> Result<f64, MetricError> {
        Ok(self.base.distance(&self.project(v)?, &self.project(w)?))
    }

    /// `√(Δqᵀ Σ Δq)` on the full semi-latent vectors.
    pub fn semilatent_mahalanobis(
        &self,
        v: &[f64],
        w: &[f64],
        sigma: &DenseMatrix,
    ) -> Result<f64, MetricError> {
        let n = self.scm.node_count();
        if sigma.shape() != (n, n) {
            return Err(MetricError::DimensionMismatch {
                base: sigma.rows(),
                latent: n,
            });
        }
        let qv = self.scm.semilatent_vector(&self.scm.to_semilatent(v)?);
        let qw = self.scm.semilatent_vector(&self.scm.to_semilatent(w)?);
        let d: Vec<f64> = qv.iter().zip(&qw).map(|(a, b)| a - b).collect();
        Ok(quadratic_form(sigma, &d).max(0.0).sqrt())
    }

    /// Diagonal projection onto the non-sensitive coordinates.
    pub fn latent_projection(&self) -> DenseMatrix {
        let n = self.scm.node_count();
        let diag: Vec<f64> = (0..n)
            .map(|i| if self.scm.is_sensitive(i) { 0.0 } else { 1.0 })
            .collect();
        DenseMatrix::from_diag(&diag)
    }

    pub fn ball(&self, center: Instance, radius: f64) -> Result<PcpBall<'_>, MetricError> {
        PcpBall::new(center, radius, self)
    }
}

/// A uniformly oriented displacement of base-metric length `r`.
pub fn random_offset(base: &BaseMetric, dim: usize, r: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = base.norm(&dir);
    if norm == 0.0 {
        return dir.iter().map(|d| d * r).collect();
    }
    dir.iter().map(|d| d * r / norm).collect()
}

/// Euclidean distance between full abducted noise vectors. Used only to show
/// why this naive construction cannot measure distances to twins.
pub fn pullback_distance(scm: &Scm, v: &[f64], w: &[f64]) -> Result<f64, ScmError> {
    let (a, b) = (scm.abduct(v)?, scm.abduct(w)?);
    Ok(BaseMetric::Euclidean.distance(&a, &b))
}

/// Result of comparing direct membership against the per-twin union.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DecompositionOutcome {
    pub checked: usize,
    pub inside: usize,
    /// Probes outside the model's support or level set.
    pub skipped: usize,
    pub disagreements: usize,
}

impl DecompositionOutcome {
    pub fn holds(&self) -> bool {
        self.disagreements == 0
    }
}

/// Protected causal perturbation ball.
#[derive(Clone, Debug)]
pub struct PcpBall<'a> {
    center: Instance,
    radius: f64,
    metric: &'a OracleMetric,
}

impl<'a> PcpBall<'a> {
    pub fn new(center: Instance, radius: f64, metric: &'a OracleMetric) -> Result<Self, MetricError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(MetricError::InvalidRadius(radius));
        }
        metric.scm.to_semilatent(&center)?;
        Ok(Self {
            center,
            radius,
            metric,
        })
    }

    pub fn center(&self) -> &Instance {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn metric(&self) -> &OracleMetric {
        self.metric
    }

    pub fn contains(&self, w: &[f64]) -> Result<bool, MetricError> {
        Ok(self.metric.distance(&self.center, w)? <= self.radius)
    }

    /// Uniform level, uniform direction and uniform radius in `[0, Δ)` in
    /// the non-sensitive semi-latent coordinates, mapped back to features.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Instance>, MetricError> {
        self.sample_with(count, &mut rng::stream(seed, "pcp-ball"))
    }

    /// [`Self::sample`] drawing from a caller-owned generator.
    pub fn sample_with(&self, count: usize, rng: &mut rng::Rng) -> Result<Vec<Instance>, MetricError> {
        let scm = &self.metric.scm;
        let q = scm.to_semilatent(&self.center)?;
        let levels = scm.levels();
        (0..count)
            .map(|_| {
                let level = &levels[rng.random_range(0..levels.len())];
                let offset = self.draw_offset(q.latent.len(), rng);
                let latent = q.latent.iter().zip(&offset).map(|(x, d)| x + d).collect();
                Ok(scm.from_semilatent(&SemiLatentPoint {
                    sensitive: level.clone(),
                    latent,
                })?)
            })
            .collect()
    }

    /// Samples of the causal ball around the center that keep its own
    /// sensitive values (no level change).
    pub fn sample_same_level_with(
        &self,
        count: usize,
        rng: &mut rng::Rng,
    ) -> Result<Vec<Instance>, MetricError> {
        let scm = &self.metric.scm;
        let q = scm.to_semilatent(&self.center)?;
        (0..count)
            .map(|_| {
                let offset = self.draw_offset(q.latent.len(), rng);
                let latent = q.latent.iter().zip(&offset).map(|(x, d)| x + d).collect();
                Ok(scm.from_semilatent(&SemiLatentPoint {
                    sensitive: q.sensitive.clone(),
                    latent,
                })?)
            })
            .collect()
    }

    fn draw_offset(&self, dim: usize, rng: &mut rng::Rng) -> Vec<f64> {
        if dim == 0 || self.radius == 0.0 {
            return vec![0.0; dim];
        }
        // Stay a hair inside the boundary so abduction round-off cannot push
        // a sample out of the closed ball.
        let r = self.radius * rng.random::<f64>() * (1.0 - 1e-9);
        random_offset(&self.metric.base, dim, r, rng)
    }

    /// Twins of the center over every level; only defined at `Δ = 0`.
    pub fn twin_set(&self) -> Result<Vec<Instance>, MetricError> {
        if self.radius != 0.0 {
            return Err(MetricError::NonzeroRadius(self.radius));
        }
        Ok(self.metric.scm.all_twins(&self.center)?)
    }

    /// Compare direct membership with membership in the union of per-twin
    /// causal balls. Each twin's coordinates come from abducting the twin
    /// itself rather than reusing the center's.
    pub fn decomposition_check(&self, probes: &[Instance]) -> Result<DecompositionOutcome, MetricError> {
        let scm = &self.metric.scm;
        let base = &self.metric.base;
        let center_x = self.metric.project(&self.center)?;
        let twins = scm.all_twins(&self.center)?;
        let twin_x = twins
            .iter()
            .map(|t| self.metric.project(t))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = DecompositionOutcome::default();
        for p in probes {
            let (Some(level), Ok(px)) = (scm.level_index(p), self.metric.project(p)) else {
                out.skipped += 1;
                continue;
            };
            let direct = base.distance(&center_x, &px) <= self.radius;
            let union = base.distance(&twin_x[level], &px) <= self.radius;
            out.checked += 1;
            out.inside += usize::from(direct);
            out.disagreements += usize::from(direct != union);
        }
        if out.skipped > 0 {
            log::warn!("decomposition check skipped {} probes outside the support", out.skipped);
        }
        Ok(out)
    }
}
