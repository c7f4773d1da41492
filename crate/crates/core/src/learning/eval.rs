//! Learned-metric evaluation against the oracle.

use serde::{Deserialize, Serialize};

use super::{LearningError, PairExample};
use crate::metric::{InstanceMetric, OracleMetric};

/// Binary confusion counts; the positive class is "dissimilar".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    /// `FN / (FN + TP)`, 0 without positives.
    pub fn fn_rate(&self) -> f64 {
        ratio(self.fn_, self.fn_ + self.tp)
    }

    /// `FP / (FP + TN)`, 0 without negatives.
    pub fn fp_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn confusion(truth: &[bool], pred: &[bool]) -> Confusion {
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub acc: f64,
    #[serde(rename = "fn")]
    pub fn_rate: f64,
    #[serde(rename = "fp")]
    pub fp_rate: f64,
    pub mcc: f64,
    pub mae: f64,
    pub rmse: f64,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 7] = ["n", "acc", "fn", "fp", "mcc", "mae", "rmse"];
}

/// Threshold the learned distance at `Δ` and compare with the oracle.
pub fn eval_metric<M: InstanceMetric + ?Sized>(
    learned: &M,
    oracle: &OracleMetric,
    delta: f64,
    pairs: &[PairExample],
) -> Result<MetricReport, LearningError> {
    if pairs.is_empty() {
        return Err(LearningError::EmptyTestSet);
    }
    let mut truth = Vec::with_capacity(pairs.len());
    let mut pred = Vec::with_capacity(pairs.len());
    let (mut abs, mut sq) = (0.0, 0.0);
    for p in pairs {
        let d_true = oracle.distance(&p.a, &p.b)?;
        let d_hat = learned.instance_distance(&p.a, &p.b)?;
        truth.push(d_true > delta);
        pred.push(d_hat > delta);
        abs += (d_hat - d_true).abs();
        sq += (d_hat - d_true).powi(2);
    }
    let n = pairs.len() as f64;
    let c = confusion(&truth, &pred);
    Ok(MetricReport {
        n: pairs.len(),
        acc: c.accuracy(),
        fn_rate: c.fn_rate(),
        fp_rate: c.fp_rate(),
        mcc: mcc(&c),
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{build_pairs, PairMode};
    use crate::scm::Scm;

    #[test]
    fn mcc_hand_case() {
        let c = Confusion { tp: 45, tn: 40, fp: 10, fn_: 5 };
        assert!((mcc(&c) - 0.7035).abs() < 1e-4);
        let one_class = Confusion { tp: 10, tn: 0, fp: 5, fn_: 0 };
        assert_eq!(mcc(&one_class), 0.0);
    }

    #[test]
    fn oracle_scores_perfectly() {
        let oracle = OracleMetric::euclidean(Scm::lin());
        let pairs = build_pairs(&oracle, 0.1, 200, 7, PairMode::Distance).unwrap();
        let r = eval_metric(&oracle, &oracle, 0.1, &pairs).unwrap();
        assert_eq!((r.acc, r.mae, r.rmse, r.mcc), (1.0, 0.0, 0.0, 1.0));
        assert!(matches!(
            eval_metric(&oracle, &oracle, 0.1, &[]),
            Err(LearningError::EmptyTestSet)
        ));
    }
}
