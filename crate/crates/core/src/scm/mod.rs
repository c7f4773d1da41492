//! Structural causal models: sampling, abduction, interventions,
//! counterfactual twins and the semi-latent representation.
//!
//! The semi-latent coordinates of an instance `v` keep the observed value
//! for every sensitive node and replace every other node by its abducted
//! noise. Mapping back runs the structural equations in topological order
//! with the sensitive nodes pinned, so a counterfactual twin is obtained by
//! swapping the sensitive block and mapping back.

mod builtins;
mod config;
mod dag;
mod equation;
mod fit;
mod noise;

use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use builtins::{DEFAULT_SELECTOR_N};
pub use config::{BuiltinScm, FitSpec, ScmSpec};
pub use dag::Dag;
pub use equation::{
    AdditiveNoise, ParentTimesComplement, ParentTimesNoise, Selector, SelectorVariant,
    StructuralEquation, Term,
};
pub use fit::{fit_linear_anm, read_table, write_table, Table};
pub use noise::NoiseDist;

use crate::nn::DenseMatrix;
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum ScmError {
    #[error("invalid graph: {0}")]
    InvalidDag(String),
    #[error("value {value} at node {node} is outside the model's support")]
    OutOfSupport { node: usize, value: f64 },
    #[error("expected {expected} coordinates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("invalid sensitive specification: {0}")]
    InvalidSensitive(String),
    #[error("least-squares design for node {node} is rank deficient")]
    SingularDesign { node: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Endogenous values `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance {
    pub values: Vec<f64>,
}

/// Exogenous values `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExogenousPoint {
    pub values: Vec<f64>,
}

macro_rules! vector_newtype {
    ($t:ident) => {
        impl $t {
            pub fn new(values: Vec<f64>) -> Self {
                Self { values }
            }
        }

        impl Deref for $t {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.values
            }
        }

        impl From<Vec<f64>> for $t {
            fn from(values: Vec<f64>) -> Self {
                Self { values }
            }
        }

        impl From<&[f64]> for $t {
            fn from(values: &[f64]) -> Self {
                Self {
                    values: values.to_vec(),
                }
            }
        }
    };
}

vector_newtype!(Instance);
vector_newtype!(ExogenousPoint);

/// Sensitive observed values plus non-sensitive noise values, each in
/// ascending node order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiLatentPoint {
    pub sensitive: Vec<f64>,
    pub latent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    /// Pin `indices[k]` to `values[k]`, severing its equation.
    Hard { indices: Vec<usize>, values: Vec<f64> },
    /// Add `δ_i` to the output of equation `i`.
    Shift(Vec<f64>),
    /// Add `δ_i` to the noise inside equation `i`.
    NoiseShift(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Scm {
    name: String,
    dag: Dag,
    equations: Vec<Arc<dyn StructuralEquation>>,
    noise: Vec<NoiseDist>,
    feature_names: Vec<String>,
    sensitive: Vec<usize>,
    non_sensitive: Vec<usize>,
    levels: Vec<Vec<f64>>,
}

impl Scm {
    /// A model without sensitive nodes; see [`Scm::with_sensitive`].
    pub fn new(
        name: impl Into<String>,
        dag: Dag,
        equations: Vec<Arc<dyn StructuralEquation>>,
        noise: Vec<NoiseDist>,
        feature_names: Vec<String>,
    ) -> Result<Self, ScmError> {
        let n = dag.node_count();
        for (what, len) in [
            ("equations", equations.len()),
            ("noise distributions", noise.len()),
            ("feature names", feature_names.len()),
        ] {
            if len != n {
                return Err(ScmError::InvalidDag(format!(
                    "{len} {what} for {n} nodes"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            dag,
            equations,
            noise,
            feature_names,
            sensitive: Vec::new(),
            non_sensitive: (0..n).collect(),
            levels: vec![Vec::new()],
        })
    }

    /// Declare the sensitive nodes and their finite level set. Each level
    /// assigns one value per sensitive node, in ascending node order.
    pub fn with_sensitive(
        mut self,
        indices: &[usize],
        levels: Vec<Vec<f64>>,
    ) -> Result<Self, ScmError> {
        let n = self.node_count();
        let mut sensitive = indices.to_vec();
        sensitive.sort_unstable();
        sensitive.dedup();
        if sensitive.len() != indices.len() || sensitive.iter().any(|&i| i >= n) {
            return Err(ScmError::InvalidSensitive(format!(
                "indices {indices:?} must be distinct and below {n}"
            )));
        }
        if levels.is_empty() || levels.iter().any(|l| l.len() != sensitive.len()) {
            return Err(ScmError::InvalidSensitive(format!(
                "need at least one level of length {}",
                sensitive.len()
            )));
        }
        self.non_sensitive = (0..n).filter(|i| !sensitive.contains(i)).collect();
        self.sensitive = sensitive;
        self.levels = levels;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.dag.node_count()
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn equation(&self, i: usize) -> &dyn StructuralEquation {
        self.equations[i].as_ref()
    }

    pub fn noise_dists(&self) -> &[NoiseDist] {
        &self.noise
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sensitive(&self) -> &[usize] {
        &self.sensitive
    }

    pub fn non_sensitive(&self) -> &[usize] {
        &self.non_sensitive
    }

    pub fn is_sensitive(&self, i: usize) -> bool {
        self.sensitive.binary_search(&i).is_ok()
    }

    /// Sensitive level set; a single empty level when nothing is sensitive.
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    fn check_len(&self, x: &[f64]) -> Result<(), ScmError> {
        if x.len() != self.node_count() {
            return Err(ScmError::DimensionMismatch {
                expected: self.node_count(),
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(ScmError::NonFinite(i));
        }
        Ok(())
    }

    fn parent_values(&self, i: usize, v: &[f64]) -> Vec<f64> {
        self.dag.parents(i).iter().map(|&p| v[p]).collect()
    }

    /// Run the structural equations on `noise`, optionally modified.
    pub fn evaluate(
        &self,
        noise: &[f64],
        intervention: Option<&Intervention>,
    ) -> Result<Instance, ScmError> {
        let n = self.node_count();
        if noise.len() != n {
            return Err(ScmError::DimensionMismatch {
                expected: n,
                found: noise.len(),
            });
        }
        let mut pinned: Vec<Option<f64>> = vec![None; n];
        let mut out_shift = None;
        let mut noise_shift = None;
        match intervention {
            None => {}
            Some(Intervention::Hard { indices, values }) => {
                if indices.len() != values.len() {
                    return Err(ScmError::DimensionMismatch {
                        expected: indices.len(),
                        found: values.len(),
                    });
                }
                for (&i, &x) in indices.iter().zip(values) {
                    if i >= n {
                        return Err(ScmError::InvalidData(format!(
                            "intervention on node {i} of {n}"
                        )));
                    }
                    pinned[i] = Some(x);
                }
            }
            Some(Intervention::Shift(d)) => out_shift = Some(self.shift_vector(d)?),
            Some(Intervention::NoiseShift(d)) => noise_shift = Some(self.shift_vector(d)?),
        }
        let mut v = vec![0.0; n];
        for &i in self.dag.topological_order() {
            if let Some(x) = pinned[i] {
                v[i] = x;
                continue;
            }
            let pa = self.parent_values(i, &v);
            let u = noise[i] + noise_shift.map_or(0.0, |d| d[i]);
            v[i] = self.equations[i].forward(&pa, u) + out_shift.map_or(0.0, |d| d[i]);
        }
        Ok(Instance::new(v))
    }

    fn shift_vector<'a>(&self, d: &'a [f64]) -> Result<&'a [f64], ScmError> {
        if d.len() != self.node_count() {
            return Err(ScmError::DimensionMismatch {
                expected: self.node_count(),
                found: d.len(),
            });
        }
        Ok(d)
    }

    /// Reduced-form map `v = g(u)`.
    pub fn reduce(&self, u: &ExogenousPoint) -> Result<Instance, ScmError> {
        self.evaluate(u, None)
    }

    pub fn sample_noise(&self, rng: &mut rng::Rng) -> ExogenousPoint {
        ExogenousPoint::new(self.noise.iter().map(|d| d.sample(rng)).collect())
    }

    /// `count` draws of `(v, u)` with `v = g(u)`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<(Instance, ExogenousPoint)> {
        let mut rng = rng::stream(seed, "scm-sample");
        (0..count)
            .map(|_| {
                let u = self.sample_noise(&mut rng);
                let v = self.reduce(&u).expect("sampled noise has model dimension");
                (v, u)
            })
            .collect()
    }

    fn invert_node(&self, i: usize, v: &[f64]) -> Result<f64, ScmError> {
        let pa = self.parent_values(i, v);
        self.equations[i]
            .noise_invert(v[i], &pa)
            .ok_or(ScmError::OutOfSupport { node: i, value: v[i] })
    }

    /// Preimage `u = g⁻¹(v)`.
    pub fn abduct(&self, v: &[f64]) -> Result<ExogenousPoint, ScmError> {
        self.check_len(v)?;
        (0..self.node_count())
            .map(|i| self.invert_node(i, v))
            .collect::<Result<Vec<_>, _>>()
            .map(ExogenousPoint::new)
    }

    /// Abduct, then re-evaluate under the intervention. Noise of
    /// hard-intervened nodes is never needed and is not abducted.
    pub fn counterfactual(&self, v: &[f64], iv: &Intervention) -> Result<Instance, ScmError> {
        self.check_len(v)?;
        let pinned: &[usize] = match iv {
            Intervention::Hard { indices, .. } => indices,
            _ => &[],
        };
        let mut u = vec![0.0; self.node_count()];
        for (i, ui) in u.iter_mut().enumerate() {
            if !pinned.contains(&i) {
                *ui = self.invert_node(i, v)?;
            }
        }
        self.evaluate(&u, Some(iv))
    }

    pub fn to_semilatent(&self, v: &[f64]) -> Result<SemiLatentPoint, ScmError> {
        self.check_len(v)?;
        Ok(SemiLatentPoint {
            sensitive: self.sensitive.iter().map(|&i| v[i]).collect(),
            latent: self
                .non_sensitive
                .iter()
                .map(|&i| self.invert_node(i, v))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Inverse recursion: sensitive nodes take `q` directly, every other node
    /// runs its equation on the already-computed parents and its latent `q`.
    pub fn from_semilatent(&self, q: &SemiLatentPoint) -> Result<Instance, ScmError> {
        let noise = self.latent_to_noise(q)?;
        self.evaluate(&noise, Some(&self.pin_sensitive(&q.sensitive)))
    }

    fn latent_to_noise(&self, q: &SemiLatentPoint) -> Result<Vec<f64>, ScmError> {
        if q.sensitive.len() != self.sensitive.len() {
            return Err(ScmError::DimensionMismatch {
                expected: self.sensitive.len(),
                found: q.sensitive.len(),
            });
        }
        if q.latent.len() != self.non_sensitive.len() {
            return Err(ScmError::DimensionMismatch {
                expected: self.non_sensitive.len(),
                found: q.latent.len(),
            });
        }
        let mut noise = vec![0.0; self.node_count()];
        for (&i, &x) in self.non_sensitive.iter().zip(&q.latent) {
            noise[i] = x;
        }
        Ok(noise)
    }

    fn pin_sensitive(&self, values: &[f64]) -> Intervention {
        Intervention::Hard {
            indices: self.sensitive.clone(),
            values: values.to_vec(),
        }
    }

    /// Full-length semi-latent vector with coordinates in node order.
    pub fn semilatent_vector(&self, q: &SemiLatentPoint) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for (&i, &x) in self.sensitive.iter().zip(&q.sensitive) {
            out[i] = x;
        }
        for (&i, &x) in self.non_sensitive.iter().zip(&q.latent) {
            out[i] = x;
        }
        out
    }

    /// Counterfactual twins of `v`, one per requested level; element `k`
    /// equals `counterfactual(v, Hard(sensitive := levels[k]))`.
    pub fn twins(&self, v: &[f64], levels: &[Vec<f64>]) -> Result<Vec<Instance>, ScmError> {
        let q = self.to_semilatent(v)?;
        levels
            .iter()
            .map(|s| {
                self.from_semilatent(&SemiLatentPoint {
                    sensitive: s.clone(),
                    latent: q.latent.clone(),
                })
            })
            .collect()
    }

    /// Twins over the declared level set.
    pub fn all_twins(&self, v: &[f64]) -> Result<Vec<Instance>, ScmError> {
        self.twins(v, &self.levels)
    }

    /// Position of `v`'s sensitive values in the level set.
    pub fn level_index(&self, v: &[f64]) -> Option<usize> {
        self.levels.iter().position(|l| {
            l.iter()
                .zip(&self.sensitive)
                .all(|(&s, &i)| v.get(i).is_some_and(|&x| x == s))
        })
    }

    /// `∂v/∂q_latent` at `q`, one column per non-sensitive node.
    pub fn latent_jacobian(&self, q: &SemiLatentPoint) -> Result<DenseMatrix, ScmError> {
        let noise = self.latent_to_noise(q)?;
        let v = self.evaluate(&noise, Some(&self.pin_sensitive(&q.sensitive)))?;
        let n = self.node_count();
        let m = self.non_sensitive.len();
        let mut jac = DenseMatrix::zeros(n, m);
        for &i in self.dag.topological_order() {
            if self.is_sensitive(i) {
                continue;
            }
            let pa = self.parent_values(i, &v);
            let dpa = self.equations[i].parent_derivatives(&pa, noise[i]);
            for col in 0..m {
                let mut d: f64 = self
                    .dag
                    .parents(i)
                    .iter()
                    .zip(&dpa)
                    .map(|(&p, &g)| g * jac[(p, col)])
                    .sum();
                if self.non_sensitive[col] == i {
                    d += self.equations[i].noise_derivative(&pa, noise[i]);
                }
                jac[(i, col)] = d;
            }
        }
        Ok(jac)
    }

    /// Every reachable instance when all noises are discrete.
    pub fn enumerate_support(&self) -> Option<Vec<Instance>> {
        let atoms: Vec<Vec<f64>> = self
            .noise
            .iter()
            .map(NoiseDist::atoms)
            .collect::<Option<_>>()?;
        let mut out: Vec<Instance> = Vec::new();
        let mut idx = vec![0usize; atoms.len()];
        loop {
            let u: Vec<f64> = idx.iter().zip(&atoms).map(|(&k, a)| a[k]).collect();
            let v = self.evaluate(&u, None).ok()?;
            if !out.contains(&v) {
                out.push(v);
            }
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    return Some(out);
                }
                idx[pos] += 1;
                if idx[pos] < atoms[pos].len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lin_reduce_and_abduct() {
        let lin = Scm::lin();
        let v = lin.reduce(&ExogenousPoint::new(vec![1.0, 0.5, 0.5])).unwrap();
        assert_eq!(v.values, vec![1.0, 2.5, -1.0]);
        let v0 = lin.reduce(&ExogenousPoint::new(vec![0.0; 3])).unwrap();
        assert_eq!(v0.values, vec![0.0; 3]);
        let u = lin.abduct(&[1.0, 2.5, -1.0]).unwrap();
        assert_eq!(u.values, vec![1.0, 0.5, 0.5]);
        assert_eq!(lin.abduct(&[0.0; 3]).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn example_models_reduce_and_abduct() {
        let m = Scm::example2(SelectorVariant::A, 2.0);
        let v = m.reduce(&ExogenousPoint::new(vec![1.0, 1.0, 0.0])).unwrap();
        assert_eq!(v.values, vec![1.0, 0.0, 0.0]);
        let e1 = Scm::example1();
        assert_eq!(e1.abduct(&[1.0, 1.0]).unwrap().values, vec![1.0, 1.0]);
        assert!(matches!(
            e1.abduct(&[0.0, 1.0]),
            Err(ScmError::OutOfSupport { node: 1, .. })
        ));
    }

    #[test]
    fn counterfactual_examples() {
        let e1 = Scm::example1();
        let hard = |i: usize, x: f64| Intervention::Hard {
            indices: vec![i],
            values: vec![x],
        };
        assert_eq!(e1.counterfactual(&[1.0, 1.0], &hard(1, -1.0)).unwrap().values, vec![1.0, -1.0]);

        let a = Scm::example2(SelectorVariant::A, 2.0);
        let b = Scm::example2(SelectorVariant::B, 2.0);
        let v = [1.0, 0.0, 0.0];
        assert_eq!(a.counterfactual(&v, &hard(0, 0.0)).unwrap().values, vec![0.0, 0.0, 0.0]);
        assert_eq!(b.counterfactual(&v, &hard(0, 0.0)).unwrap().values, vec![0.0, 0.0, 2.0]);

        let lin = Scm::lin();
        let cf = lin.counterfactual(&[1.0, 2.5, -1.0], &hard(0, 0.0)).unwrap();
        assert!(close(&cf, &[0.0, 0.5, 0.0], 1e-12));
    }

    #[test]
    fn twin_examples() {
        let lin = Scm::lin();
        let v = [1.0, 2.5, -1.0];
        let t = lin.all_twins(&v).unwrap();
        assert!(close(&t[0], &[0.0, 0.5, 0.0], 1e-12));
        assert!(close(&t[1], &v, 1e-12));
        let own = lin.twins(&v, &[vec![1.0]]).unwrap();
        assert!(close(&own[0], &v, 1e-12));

        let e1 = Scm::example1();
        let t: Vec<Vec<f64>> = e1
            .all_twins(&[1.0, 1.0])
            .unwrap()
            .into_iter()
            .map(|i| i.values)
            .collect();
        assert_eq!(t, vec![vec![1.0, -1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn semilatent_examples() {
        let lin = Scm::lin();
        let q = lin.to_semilatent(&[1.0, 2.5, -1.0]).unwrap();
        assert_eq!(q, SemiLatentPoint { sensitive: vec![1.0], latent: vec![0.5, 0.5] });
        let back = lin
            .from_semilatent(&SemiLatentPoint { sensitive: vec![0.0], latent: vec![0.5, 0.5] })
            .unwrap();
        assert!(close(&back, &[0.0, 0.5, 0.0], 1e-12));
        let z = lin.to_semilatent(&[0.0; 3]).unwrap();
        assert_eq!(z, SemiLatentPoint { sensitive: vec![0.0], latent: vec![0.0, 0.0] });
        assert_eq!(lin.from_semilatent(&z).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn shift_interventions() {
        let lin = Scm::lin();
        let v = [1.0, 2.5, -1.0];
        // Shifting the noise of X1 by 1 moves X1 by 1 and X2 by −1.
        let ns = lin
            .counterfactual(&v, &Intervention::NoiseShift(vec![0.0, 1.0, 0.0]))
            .unwrap();
        assert!(close(&ns, &[1.0, 3.5, -2.0], 1e-12));
        let s = lin
            .counterfactual(&v, &Intervention::Shift(vec![0.0, 1.0, 0.0]))
            .unwrap();
        assert!(close(&s, &[1.0, 3.5, -2.0], 1e-12));
    }

    #[test]
    fn latent_jacobian_matches_differences() {
        for scm in [Scm::lin(), Scm::nlm()] {
            let q = SemiLatentPoint { sensitive: vec![1.0], latent: vec![0.3, -0.7] };
            let jac = scm.latent_jacobian(&q).unwrap();
            let h = 1e-6;
            for col in 0..2 {
                let mut qp = q.clone();
                qp.latent[col] += h;
                let mut qm = q.clone();
                qm.latent[col] -= h;
                let vp = scm.from_semilatent(&qp).unwrap();
                let vm = scm.from_semilatent(&qm).unwrap();
                for row in 0..3 {
                    let fd = (vp[row] - vm[row]) / (2.0 * h);
                    assert!((fd - jac[(row, col)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn example1_support() {
        let mut s: Vec<Vec<f64>> = Scm::example1()
            .enumerate_support()
            .unwrap()
            .into_iter()
            .map(|i| i.values)
            .collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            s,
            vec![vec![-1.0, -1.0], vec![-1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
        assert!(Scm::lin().enumerate_support().is_none());
    }

    #[test]
    fn sensitive_free_model_has_single_level() {
        let scm = Scm::lin_without_sensitive();
        assert_eq!(scm.levels(), &[Vec::<f64>::new()]);
        let v = [1.0, 2.5, -1.0];
        let t = scm.all_twins(&v).unwrap();
        assert_eq!(t.len(), 1);
        assert!(close(&t[0], &v, 1e-12));
    }
}
