//! Structural equations with closed-form noise inversion.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One node's mechanism `v = f(pa, u)`, invertible in `u`.
///
/// Parent values arrive in the order listed by the graph.
pub trait StructuralEquation: fmt::Debug + Send + Sync {
    fn forward(&self, parents: &[f64], noise: f64) -> f64;

    /// The noise reproducing `value`, or `None` outside the support.
    fn noise_invert(&self, value: f64, parents: &[f64]) -> Option<f64>;

    /// `∂f/∂u`.
    fn noise_derivative(&self, parents: &[f64], noise: f64) -> f64;

    /// `∂f/∂pa_k` for every parent.
    fn parent_derivatives(&self, parents: &[f64], noise: f64) -> Vec<f64>;

    /// Short human-readable form, used in reports.
    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

/// `c·pa^p` on the parent at position `parent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub parent: usize,
    pub coeff: f64,
    pub power: i32,
}

/// `v = intercept + Σ c_k·pa_k^{p_k} + scale·u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditiveNoise {
    pub intercept: f64,
    pub terms: Vec<Term>,
    pub noise_scale: f64,
}

impl AdditiveNoise {
    /// `v = u`.
    pub fn root() -> Self {
        Self::linear(0.0, &[])
    }

    /// `v = intercept + Σ c_k·pa_k + u`.
    pub fn linear(intercept: f64, coeffs: &[f64]) -> Self {
        Self {
            intercept,
            terms: coeffs
                .iter()
                .enumerate()
                .map(|(parent, &coeff)| Term {
                    parent,
                    coeff,
                    power: 1,
                })
                .collect(),
            noise_scale: 1.0,
        }
    }

    fn mean(&self, parents: &[f64]) -> f64 {
        self.terms.iter().fold(self.intercept, |acc, t| {
            acc + t.coeff * parents[t.parent].powi(t.power)
        })
    }
}

impl StructuralEquation for AdditiveNoise {
    fn forward(&self, parents: &[f64], noise: f64) -> f64 {
        self.mean(parents) + self.noise_scale * noise
    }

    fn noise_invert(&self, value: f64, parents: &[f64]) -> Option<f64> {
        if self.noise_scale == 0.0 {
            return None;
        }
        let u = (value - self.mean(parents)) / self.noise_scale;
        u.is_finite().then_some(u)
    }

    fn noise_derivative(&self, _parents: &[f64], _noise: f64) -> f64 {
        self.noise_scale
    }

    fn parent_derivatives(&self, parents: &[f64], _noise: f64) -> Vec<f64> {
        let mut d = vec![0.0; parents.len()];
        for t in &self.terms {
            d[t.parent] += match t.power {
                0 => 0.0,
                p => t.coeff * f64::from(p) * parents[t.parent].powi(p - 1),
            };
        }
        d
    }

    fn describe(&self) -> String {
        let mut s = format!("{}", self.intercept);
        for t in &self.terms {
            s.push_str(&format!(" + {}·pa{}^{}", t.coeff, t.parent, t.power));
        }
        format!("{s} + {}·u", self.noise_scale)
    }
}

/// `v = pa_0 · u`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParentTimesNoise;

impl StructuralEquation for ParentTimesNoise {
    fn forward(&self, parents: &[f64], noise: f64) -> f64 {
        parents[0] * noise
    }

    fn noise_invert(&self, value: f64, parents: &[f64]) -> Option<f64> {
        (parents[0] != 0.0).then(|| value / parents[0])
    }

    fn noise_derivative(&self, parents: &[f64], _noise: f64) -> f64 {
        parents[0]
    }

    fn parent_derivatives(&self, _parents: &[f64], noise: f64) -> Vec<f64> {
        vec![noise]
    }
}

/// `v = pa_0 · (1 − u)` with binary `u`.
///
/// When the parent is zero every `u` gives the same value; abduction then
/// returns the canonical representative `u = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParentTimesComplement;

impl StructuralEquation for ParentTimesComplement {
    fn forward(&self, parents: &[f64], noise: f64) -> f64 {
        parents[0] * (1.0 - noise)
    }

    fn noise_invert(&self, value: f64, parents: &[f64]) -> Option<f64> {
        if parents[0] != 0.0 {
            Some(1.0 - value / parents[0])
        } else {
            (value == 0.0).then_some(0.0)
        }
    }

    fn noise_derivative(&self, parents: &[f64], _noise: f64) -> f64 {
        -parents[0]
    }

    fn parent_derivatives(&self, _parents: &[f64], noise: f64) -> Vec<f64> {
        vec![1.0 - noise]
    }
}

/// Which of the two observationally equivalent mechanisms to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectorVariant {
    /// Ties resolve to `u`.
    A,
    /// Ties resolve to `N − u`.
    B,
}

/// Three-node selector with `u ~ Uniform(0, N)`:
///
/// * `pa_0 ≠ pa_1`: `v = pa_0` if `u > 0`, else `pa_1`;
/// * `pa_0 = pa_1`: `v = u` (variant A) or `N − u` (variant B).
///
/// In the first branch only the sign of `u` is identified; abduction
/// returns `N/2` for `v = pa_0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selector {
    pub variant: SelectorVariant,
    pub n: f64,
}

impl StructuralEquation for Selector {
    fn forward(&self, parents: &[f64], noise: f64) -> f64 {
        let (a, b) = (parents[0], parents[1]);
        if a != b {
            if noise > 0.0 {
                a
            } else {
                b
            }
        } else {
            match self.variant {
                SelectorVariant::A => noise,
                SelectorVariant::B => self.n - noise,
            }
        }
    }

    fn noise_invert(&self, value: f64, parents: &[f64]) -> Option<f64> {
        let (a, b) = (parents[0], parents[1]);
        if a != b {
            if value == a {
                Some(self.n / 2.0)
            } else if value == b {
                Some(0.0)
            } else {
                None
            }
        } else {
            let u = match self.variant {
                SelectorVariant::A => value,
                SelectorVariant::B => self.n - value,
            };
            (0.0..=self.n).contains(&u).then_some(u)
        }
    }

    fn noise_derivative(&self, parents: &[f64], _noise: f64) -> f64 {
        match (parents[0] != parents[1], self.variant) {
            (true, _) => 0.0,
            (false, SelectorVariant::A) => 1.0,
            (false, SelectorVariant::B) => -1.0,
        }
    }

    fn parent_derivatives(&self, parents: &[f64], noise: f64) -> Vec<f64> {
        if parents[0] != parents[1] {
            if noise > 0.0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        } else {
            vec![0.0, 0.0]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_roundtrip_and_derivatives() {
        let f = AdditiveNoise {
            intercept: 0.5,
            terms: vec![
                Term { parent: 0, coeff: 2.0, power: 2 },
                Term { parent: 1, coeff: -1.0, power: 1 },
            ],
            noise_scale: 1.0,
        };
        let pa = [1.5, -0.3];
        let v = f.forward(&pa, 0.7);
        assert!((f.noise_invert(v, &pa).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(f.parent_derivatives(&pa, 0.7), vec![6.0, -1.0]);
    }

    #[test]
    fn product_needs_nonzero_parent() {
        assert_eq!(ParentTimesNoise.noise_invert(1.0, &[0.0]), None);
        assert_eq!(ParentTimesNoise.noise_invert(-1.0, &[1.0]), Some(-1.0));
    }

    #[test]
    fn selector_branches() {
        let a = Selector { variant: SelectorVariant::A, n: 2.0 };
        let b = Selector { variant: SelectorVariant::B, n: 2.0 };
        assert_eq!(a.forward(&[1.0, 0.0], 0.0), 0.0);
        assert_eq!(a.forward(&[1.0, 0.0], 0.3), 1.0);
        assert_eq!(a.forward(&[0.0, 0.0], 0.3), 0.3);
        assert_eq!(b.forward(&[0.0, 0.0], 0.3), 1.7);
        assert_eq!(a.noise_invert(0.5, &[1.0, 0.0]), None);
        assert_eq!(b.noise_invert(1.7, &[0.0, 0.0]), Some(2.0 - 1.7));
    }
}
