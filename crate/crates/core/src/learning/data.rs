//! Supervision builders and their CSV forms.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::LearningError;
use crate::metric::{random_offset, OracleMetric};
use crate::rng::{self, Rng};
use crate::scm::{Instance, SemiLatentPoint};

/// Chance that an inside pair uses an exact twin instead of a ball sample.
pub const TWIN_PROBABILITY: f64 = 0.1;
/// Outside offsets have base-metric length in `(Δ, OUTSIDE_FACTOR·Δ]`.
const OUTSIDE_FACTOR: f64 = 4.0;
/// Lower end of the outside shell, kept clear of the boundary so abduction
/// round-off cannot pull an outside point back into the ball.
const OUTSIDE_CLEARANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Distance,
    Label,
}

/// Two instances and either their oracle distance or a label (`1` when the
/// distance exceeds `Δ`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub a: Instance,
    pub b: Instance,
    pub tag: f64,
}

impl PairExample {
    pub fn label(&self) -> u8 {
        u8::from(self.tag > 0.5)
    }
}

/// Oracle distances satisfy `d(anchor, positive) ≤ Δ < d(anchor, negative)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletExample {
    pub anchor: Instance,
    pub positive: Instance,
    pub negative: Instance,
}

struct Generator<'a> {
    oracle: &'a OracleMetric,
    delta: f64,
    rng: Rng,
}

impl Generator<'_> {
    fn anchor(&mut self) -> Instance {
        let scm = self.oracle.scm();
        let u = scm.sample_noise(&mut self.rng);
        scm.reduce(&u).expect("sampled noise has model dimension")
    }

    fn random_level(&mut self) -> Vec<f64> {
        let levels = self.oracle.scm().levels();
        levels[self.rng.random_range(0..levels.len())].clone()
    }

    fn inside(&mut self, anchor: &Instance) -> Result<Instance, LearningError> {
        let scm = self.oracle.scm();
        if self.rng.random::<f64>() < TWIN_PROBABILITY {
            let level = self.random_level();
            return Ok(scm.twins(anchor, &[level])?.remove(0));
        }
        let ball = self.oracle.ball(anchor.clone(), self.delta)?;
        Ok(ball.sample_with(1, &mut self.rng)?.remove(0))
    }

    fn outside(&mut self, anchor: &Instance) -> Result<Instance, LearningError> {
        if self.rng.random::<bool>() {
            loop {
                let w = self.anchor();
                if self.oracle.distance(anchor, &w)? > self.delta {
                    return Ok(w);
                }
            }
        }
        let scm = self.oracle.scm();
        let q = scm.to_semilatent(anchor)?;
        let lo = self.delta * (1.0 + OUTSIDE_CLEARANCE);
        let r = self.rng.random_range(lo..=OUTSIDE_FACTOR * self.delta);
        let offset = random_offset(self.oracle.base(), q.latent.len(), r, &mut self.rng);
        let level = self.random_level();
        Ok(scm.from_semilatent(&SemiLatentPoint {
            sensitive: level,
            latent: q.latent.iter().zip(&offset).map(|(x, d)| x + d).collect(),
        })?)
    }
}

/// Half the pairs come from the PCP ball of the first instance (exact twins
/// with probability [`TWIN_PROBABILITY`]), half from outside it (a latent
/// offset in `(Δ, 4Δ]` or an independent draw, with equal odds).
pub fn build_pairs(
    oracle: &OracleMetric,
    delta: f64,
    count: usize,
    seed: u64,
    mode: PairMode,
) -> Result<Vec<PairExample>, LearningError> {
    if count < 2 {
        return Err(LearningError::TooFewSamples { needed: 2, got: count });
    }
    check_delta(delta)?;
    let mut g = Generator {
        oracle,
        delta,
        rng: rng::stream(seed, "pairs"),
    };
    (0..count)
        .map(|k| {
            let a = g.anchor();
            let b = if k % 2 == 0 { g.inside(&a)? } else { g.outside(&a)? };
            let d = oracle.distance(&a, &b)?;
            let tag = match mode {
                PairMode::Distance => d,
                PairMode::Label => f64::from(u8::from(d > delta)),
            };
            Ok(PairExample { a, b, tag })
        })
        .collect()
}

pub fn build_triplets(
    oracle: &OracleMetric,
    delta: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<TripletExample>, LearningError> {
    if count < 1 {
        return Err(LearningError::TooFewSamples { needed: 1, got: count });
    }
    check_delta(delta)?;
    let mut g = Generator {
        oracle,
        delta,
        rng: rng::stream(seed, "triplets"),
    };
    (0..count)
        .map(|_| {
            let anchor = g.anchor();
            let positive = g.inside(&anchor)?;
            let negative = g.outside(&anchor)?;
            Ok(TripletExample {
                anchor,
                positive,
                negative,
            })
        })
        .collect()
}

fn check_delta(delta: f64) -> Result<(), LearningError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(LearningError::Config(format!("Δ must be positive, got {delta}")));
    }
    Ok(())
}

fn block_header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

/// Columns `a_0..a_{n−1}, b_0..b_{n−1}, tag`.
pub fn write_pairs(path: &Path, pairs: &[PairExample], n: usize) -> Result<(), LearningError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = block_header("a", n)
        .chain(block_header("b", n))
        .chain(std::iter::once("tag".to_string()))
        .collect();
    w.write_record(&header)?;
    for p in pairs {
        let row = p.a.iter().chain(p.b.iter()).chain(std::iter::once(&p.tag));
        w.write_record(row.map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `a_*, p_*, n_*` for anchor, positive and negative.
pub fn write_triplets(path: &Path, triplets: &[TripletExample], n: usize) -> Result<(), LearningError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = block_header("a", n)
        .chain(block_header("p", n))
        .chain(block_header("n", n))
        .collect();
    w.write_record(&header)?;
    for t in triplets {
        let row = t.anchor.iter().chain(t.positive.iter()).chain(t.negative.iter());
        w.write_record(row.map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, LearningError> {
    let mut r = csv::Reader::from_path(path)?;
    let found = r.headers()?.len();
    if found != width {
        return Err(LearningError::LengthMismatch(width, found));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| LearningError::Config(format!("{s:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

pub fn read_pairs(path: &Path, n: usize) -> Result<Vec<PairExample>, LearningError> {
    Ok(read_rows(path, 2 * n + 1)?
        .into_iter()
        .map(|row| PairExample {
            a: Instance::from(&row[..n]),
            b: Instance::from(&row[n..2 * n]),
            tag: row[2 * n],
        })
        .collect())
}

pub fn read_triplets(path: &Path, n: usize) -> Result<Vec<TripletExample>, LearningError> {
    Ok(read_rows(path, 3 * n)?
        .into_iter()
        .map(|row| TripletExample {
            anchor: Instance::from(&row[..n]),
            positive: Instance::from(&row[n..2 * n]),
            negative: Instance::from(&row[2 * n..]),
        })
        .collect())
}
