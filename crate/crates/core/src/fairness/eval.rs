//! Fairness and robustness evaluation against the oracle model.

use serde::{Deserialize, Serialize};

use super::{FairnessError, Predictor};
use crate::learning::{confusion, mcc};
use crate::metric::{InstanceMetric, OracleMetric, PcpBall};
use crate::rng;
use crate::scm::Instance;

pub const DEFAULT_EVAL_DELTA: f64 = 0.01;
pub const DEFAULT_PROBES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub method: String,
    pub dataset: String,
    pub delta: f64,
    pub acc: f64,
    pub mcc: f64,
    pub unfair_area: f64,
    pub cf_unfair_area: f64,
    pub nonrobust_area: f64,
    pub seed: u64,
}

impl FairnessReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "method",
        "dataset",
        "delta",
        "acc",
        "mcc",
        "unfair_area",
        "cf_unfair_area",
        "nonrobust_area",
        "seed",
    ];
}

/// Accuracy, MCC and the three flip areas of `h` on `test`.
///
/// A point is counterfactually unfair when a twin changes the prediction,
/// non-robust when one of `probes` samples of the causal ball at its own level
/// does, and unfair when a twin or one of `probes` samples of the full PCP
/// ball does. Each point draws from its own generator, so the probe sets for
/// `K` are prefixes of those for any larger `K`.
pub fn eval_fairness<P: Predictor + ?Sized>(
    h: &P,
    oracle: &OracleMetric,
    test: &[Instance],
    labels: &[u8],
    delta: f64,
    probes: usize,
    seed: u64,
) -> Result<FairnessReport, FairnessError> {
    if test.is_empty() {
        return Err(FairnessError::EmptyTestSet);
    }
    if test.len() != labels.len() {
        return Err(FairnessError::LengthMismatch(test.len(), labels.len()));
    }
    if probes == 0 {
        return Err(FairnessError::Config("need at least one probe per point".into()));
    }
    let scm = oracle.scm();
    let mut pred = Vec::with_capacity(test.len());
    let (mut unfair, mut cf_unfair, mut nonrobust) = (0usize, 0usize, 0usize);
    for (i, v) in test.iter().enumerate() {
        let twins = scm.all_twins(v)?;
        let ball = PcpBall::new(v.clone(), delta, oracle)?;
        let mut rng = rng::stream(seed, &format!("fairness-probe-{i}"));
        let pcp = ball.sample_with(probes, &mut rng)?;
        let mut rng = rng::stream(seed, &format!("robustness-probe-{i}"));
        let own = ball.sample_same_level_with(probes, &mut rng)?;

        let mut rows = Vec::with_capacity(1 + twins.len() + 2 * probes);
        rows.push(v.clone());
        rows.extend(twins.iter().cloned());
        rows.extend(pcp);
        rows.extend(own);
        let labels_hat: Vec<bool> = h.probabilities(&rows).into_iter().map(|p| p > 0.5).collect();
        let p0 = labels_hat[0];
        let flips = |r: std::ops::Range<usize>| labels_hat[r].iter().any(|&p| p != p0);
        let t = twins.len();
        let cf = flips(1..1 + t);
        cf_unfair += usize::from(cf);
        unfair += usize::from(cf || flips(1 + t..1 + t + probes));
        nonrobust += usize::from(flips(1 + t + probes..1 + t + 2 * probes));
        pred.push(p0);
    }
    let truth: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
    let c = confusion(&truth, &pred);
    let n = test.len() as f64;
    Ok(FairnessReport {
        method: String::new(),
        dataset: scm.name().to_string(),
        delta,
        acc: c.accuracy(),
        mcc: mcc(&c),
        unfair_area: unfair as f64 / n,
        cf_unfair_area: cf_unfair as f64 / n,
        nonrobust_area: nonrobust as f64 / n,
        seed,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pairs: usize,
    pub eps_delta_violations: usize,
    pub lipschitz_violations: usize,
}

/// Count pairs with `d(v, w) ≤ δ_thr` but `|h(v) − h(w)| > ε`, and pairs with
/// `|h(v) − h(w)| > L·d(v, w)`, using probability scores as outputs.
pub fn audit_individual_fairness<P: Predictor + ?Sized, M: InstanceMetric + ?Sized>(
    h: &P,
    metric: &M,
    pairs: &[(Instance, Instance)],
    eps: f64,
    delta_thr: f64,
    lipschitz: f64,
) -> Result<AuditReport, FairnessError> {
    let mut out = AuditReport {
        pairs: pairs.len(),
        ..AuditReport::default()
    };
    for (v, w) in pairs {
        let d = metric.instance_distance(v, w)?;
        let gap = (h.probability(v) - h.probability(w)).abs();
        if d <= delta_thr && gap > eps {
            out.eps_delta_violations += 1;
        }
        if gap > lipschitz * d {
            out.lipschitz_violations += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Scm;

    fn sample(scm: &Scm, n: usize) -> (Vec<Instance>, Vec<u8>) {
        let v: Vec<Instance> = scm.sample(n, 3).into_iter().map(|(v, _)| v).collect();
        let y = v.iter().map(|x| u8::from(x[1] > 0.0)).collect();
        (v, y)
    }

    #[test]
    fn constant_classifier_is_fair() {
        let oracle = OracleMetric::euclidean(Scm::lin());
        let (v, y) = sample(oracle.scm(), 50);
        let h = |_: &[f64]| 0.8;
        let r = eval_fairness(&h, &oracle, &v, &y, 0.01, 20, 0).unwrap();
        assert_eq!((r.unfair_area, r.cf_unfair_area, r.nonrobust_area), (0.0, 0.0, 0.0));
        let pairs: Vec<_> = v.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        let a = audit_individual_fairness(&h, &oracle, &pairs, 0.0, 10.0, 0.0).unwrap();
        assert_eq!((a.eps_delta_violations, a.lipschitz_violations), (0, 0));
    }

    #[test]
    fn areas_are_nested_and_monotone_in_probes() {
        let oracle = OracleMetric::euclidean(Scm::lin());
        let (v, y) = sample(oracle.scm(), 200);
        let h = |x: &[f64]| if x[1] + x[2] > 0.3 { 0.9 } else { 0.1 };
        let mut last = 0.0;
        for k in [10, 100] {
            let r = eval_fairness(&h, &oracle, &v, &y, 0.2, k, 7).unwrap();
            assert!(r.cf_unfair_area <= r.unfair_area && r.nonrobust_area <= r.unfair_area);
            assert!(r.unfair_area >= last);
            last = r.unfair_area;
        }
    }

    #[test]
    fn sensitive_only_classifier_is_counterfactually_unfair() {
        let oracle = OracleMetric::euclidean(Scm::example1());
        let (v, y) = sample(oracle.scm(), 100);
        let h = |x: &[f64]| if x[1] == 1.0 { 1.0 } else { 0.0 };
        let r = eval_fairness(&h, &oracle, &v, &y, 0.0, 1, 0).unwrap();
        assert_eq!(r.cf_unfair_area, 1.0);

        let lin = OracleMetric::euclidean(Scm::lin());
        let (v, _) = sample(lin.scm(), 50);
        let pairs: Vec<_> = v
            .iter()
            .map(|x| {
                let t = lin.scm().all_twins(x).unwrap();
                (t[0].clone(), t[1].clone())
            })
            .collect();
        let h = |x: &[f64]| if x[0] == 1.0 { 1.0 } else { 0.0 };
        let a = audit_individual_fairness(&h, &lin, &pairs, 0.5, 1e-9, 1.0).unwrap();
        assert_eq!(a.eps_delta_violations, 50);
        assert_eq!(a.lipschitz_violations, 50);
    }

    #[test]
    fn empty_test_set() {
        let oracle = OracleMetric::euclidean(Scm::lin());
        let h = |_: &[f64]| 0.5;
        assert!(matches!(
            eval_fairness(&h, &oracle, &[], &[], 0.01, 10, 0),
            Err(FairnessError::EmptyTestSet)
        ));
    }
}
