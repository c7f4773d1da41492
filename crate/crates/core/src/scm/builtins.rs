//! Built-in models.

use std::sync::Arc;

use super::equation::{
    AdditiveNoise, ParentTimesComplement, ParentTimesNoise, Selector, SelectorVariant,
    StructuralEquation, Term,
};
use super::{Dag, NoiseDist, Scm};

pub const DEFAULT_SELECTOR_N: f64 = 2.0;

const FAIR_COIN: NoiseDist = NoiseDist::Bernoulli { p: 0.5 };
const STD_NORMAL: NoiseDist = NoiseDist::Normal {
    mean: 0.0,
    variance: 1.0,
};

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

fn dag(parents: Vec<Vec<usize>>) -> Dag {
    Dag::new(parents).expect("built-in graphs are acyclic")
}

fn poly(terms: &[(usize, f64, i32)]) -> Arc<dyn StructuralEquation> {
    Arc::new(AdditiveNoise {
        intercept: 0.0,
        terms: terms
            .iter()
            .map(|&(parent, coeff, power)| Term {
                parent,
                coeff,
                power,
            })
            .collect(),
        noise_scale: 1.0,
    })
}

impl Scm {
    /// `S := U_S`, `X1 := 2S + U1`, `X2 := S − X1 + U2`; `S` sensitive in {0, 1}.
    pub fn lin() -> Self {
        Self::lin_without_sensitive()
            .with_sensitive(&[0], vec![vec![0.0], vec![1.0]])
            .expect("valid sensitive set")
    }

    /// The linear model with no sensitive node.
    pub fn lin_without_sensitive() -> Self {
        Scm::new(
            "lin",
            dag(vec![vec![], vec![0], vec![0, 1]]),
            vec![
                poly(&[]),
                poly(&[(0, 2.0, 1)]),
                poly(&[(0, 1.0, 1), (1, -1.0, 1)]),
            ],
            vec![FAIR_COIN, STD_NORMAL, STD_NORMAL],
            names(&["s", "x1", "x2"]),
        )
        .expect("consistent built-in")
    }

    /// `S := U_S`, `X1 := 2S² + U1`, `X2 := S − X1² + U2`.
    pub fn nlm() -> Self {
        Scm::new(
            "nlm",
            dag(vec![vec![], vec![0], vec![0, 1]]),
            vec![
                poly(&[]),
                poly(&[(0, 2.0, 2)]),
                poly(&[(0, 1.0, 1), (1, -1.0, 2)]),
            ],
            vec![FAIR_COIN, STD_NORMAL, STD_NORMAL],
            names(&["s", "x1", "x2"]),
        )
        .expect("consistent built-in")
        .with_sensitive(&[0], vec![vec![0.0], vec![1.0]])
        .expect("valid sensitive set")
    }

    /// `V1 := 2(U1 − 0.5)`, `V2 := V1·U2` with fair-coin noises; `V2`
    /// sensitive with levels {−1, 0, 1}.
    pub fn example1() -> Self {
        Scm::new(
            "example1",
            dag(vec![vec![], vec![0]]),
            vec![
                Arc::new(AdditiveNoise {
                    intercept: -1.0,
                    terms: vec![],
                    noise_scale: 2.0,
                }),
                Arc::new(ParentTimesNoise),
            ],
            vec![FAIR_COIN, FAIR_COIN],
            names(&["v1", "v2"]),
        )
        .expect("consistent built-in")
        .with_sensitive(&[1], vec![vec![-1.0], vec![0.0], vec![1.0]])
        .expect("valid sensitive set")
    }

    /// `V1 := U1`, `V2 := V1(1 − U2)`, `V3 :=` [`Selector`] with
    /// `U3 ~ Uniform(0, n)`; `V1` sensitive in {0, 1}. Variants A and B share
    /// every observational and interventional distribution but disagree on
    /// counterfactuals.
    pub fn example2(variant: SelectorVariant, n: f64) -> Self {
        let name = match variant {
            SelectorVariant::A => "example2a",
            SelectorVariant::B => "example2b",
        };
        Scm::new(
            name,
            dag(vec![vec![], vec![0], vec![0, 1]]),
            vec![
                poly(&[]),
                Arc::new(ParentTimesComplement),
                Arc::new(Selector { variant, n }),
            ],
            vec![
                FAIR_COIN,
                FAIR_COIN,
                NoiseDist::Uniform { low: 0.0, high: n },
            ],
            names(&["v1", "v2", "v3"]),
        )
        .expect("consistent built-in")
        .with_sensitive(&[0], vec![vec![0.0], vec![1.0]])
        .expect("valid sensitive set")
    }
}
