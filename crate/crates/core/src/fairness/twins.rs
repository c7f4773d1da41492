//! Nearest-neighbour twin estimation under a metric with an embedding.

use super::FairnessError;
use crate::learning::LearnedMetric;
use crate::metric::{BaseMetric, OracleMetric};
use crate::nn::DenseMatrix;
use crate::scm::Instance;

/// A metric of the form `base(embed(v), embed(w))`.
pub trait Embedder {
    fn embed_rows(&self, rows: &[Instance]) -> Result<DenseMatrix, FairnessError>;
    fn embed_metric(&self) -> &BaseMetric;
}

impl Embedder for LearnedMetric {
    fn embed_rows(&self, rows: &[Instance]) -> Result<DenseMatrix, FairnessError> {
        Ok(self.embed_batch(rows)?)
    }

    fn embed_metric(&self) -> &BaseMetric {
        &self.embed_metric
    }
}

impl Embedder for OracleMetric {
    fn embed_rows(&self, rows: &[Instance]) -> Result<DenseMatrix, FairnessError> {
        let proj = rows
            .iter()
            .map(|r| self.project(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DenseMatrix::from_rows(&proj)?)
    }

    fn embed_metric(&self) -> &BaseMetric {
        self.base()
    }
}

/// Pool members grouped by sensitive level, embedded once.
pub struct TwinEstimator<'a, E: Embedder + ?Sized> {
    embedder: &'a E,
    sensitive: Vec<usize>,
    levels: Vec<Vec<f64>>,
    pool: Vec<(Vec<Instance>, DenseMatrix)>,
}

fn sensitive_values(v: &[f64], sensitive: &[usize]) -> Vec<f64> {
    sensitive.iter().map(|&i| v[i]).collect()
}

impl<'a, E: Embedder + ?Sized> TwinEstimator<'a, E> {
    pub fn new(
        embedder: &'a E,
        sensitive: &[usize],
        levels: &[Vec<f64>],
        pool: &[Instance],
    ) -> Result<Self, FairnessError> {
        let mut groups: Vec<Vec<Instance>> = vec![Vec::new(); levels.len()];
        for p in pool {
            let s = sensitive_values(p, sensitive);
            if let Some(k) = levels.iter().position(|l| *l == s) {
                groups[k].push(p.clone());
            }
        }
        let pool = groups
            .into_iter()
            .zip(levels)
            .map(|(g, l)| {
                if g.is_empty() {
                    return Err(FairnessError::MissingLevel(l.clone()));
                }
                let e = embedder.embed_rows(&g)?;
                Ok((g, e))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            embedder,
            sensitive: sensitive.to_vec(),
            levels: levels.to_vec(),
            pool,
        })
    }

    /// Distinct sensitive value combinations in the pool, sorted.
    pub fn levels_in(pool: &[Instance], sensitive: &[usize]) -> Vec<Vec<f64>> {
        let mut levels: Vec<Vec<f64>> = pool.iter().map(|p| sensitive_values(p, sensitive)).collect();
        levels.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        levels.dedup();
        levels
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// One estimate per level, in level order; `v` itself at its own level.
    pub fn estimate(&self, v: &Instance) -> Result<Vec<Instance>, FairnessError> {
        Ok(self.estimate_batch(std::slice::from_ref(v))?.pop().expect("one row"))
    }

    pub fn estimate_batch(&self, vs: &[Instance]) -> Result<Vec<Vec<Instance>>, FairnessError> {
        if vs.is_empty() {
            return Ok(Vec::new());
        }
        let emb = self.embedder.embed_rows(vs)?;
        let metric = self.embedder.embed_metric();
        vs.iter()
            .enumerate()
            .map(|(i, v)| {
                let s = sensitive_values(v, &self.sensitive);
                let own = self
                    .levels
                    .iter()
                    .position(|l| *l == s)
                    .ok_or(FairnessError::UnknownLevel(s))?;
                Ok(self
                    .pool
                    .iter()
                    .enumerate()
                    .map(|(k, (members, pe))| {
                        if k == own {
                            return v.clone();
                        }
                        let best = (0..members.len())
                            .map(|j| (j, metric.squared(emb.row(i), pe.row(j))))
                            .fold((0, f64::INFINITY), |a, c| if c.1 < a.1 { c } else { a });
                        members[best.0].clone()
                    })
                    .collect())
            })
            .collect()
    }
}

/// Single-instance convenience wrapper around [`TwinEstimator`].
pub fn estimate_twins<E: Embedder + ?Sized>(
    v: &Instance,
    sensitive: &[usize],
    levels: &[Vec<f64>],
    metric: &E,
    pool: &[Instance],
) -> Result<Vec<Instance>, FairnessError> {
    TwinEstimator::new(metric, sensitive, levels, pool)?.estimate(v)
}
