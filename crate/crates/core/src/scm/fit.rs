//! Tabular I/O and linear additive-noise fits.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::equation::{AdditiveNoise, StructuralEquation};
use super::{Dag, NoiseDist, Scm, ScmError};
use crate::nn::DenseMatrix;

/// Sensitive columns with more distinct values than this are treated as
/// continuous and rejected.
pub const MAX_SENSITIVE_LEVELS: usize = 16;

/// Named real columns, one row per instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table, ScmError> {
    let mut reader = csv::Reader::from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| {
                    ScmError::InvalidData(format!("row {}: {s:?}: {e}", line + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != names.len() {
            return Err(ScmError::InvalidData(format!(
                "row {} has {} fields, header has {}",
                line + 1,
                row.len(),
                names.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { names, rows })
}

pub fn write_table(path: &Path, table: &Table) -> Result<(), ScmError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(&table.names)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|x| x.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Least-squares linear equations with Gaussian residual noise.
///
/// Parentless columns get `f ≡ 0`: binary columns become Bernoulli with the
/// empirical rate, anything else Normal with the empirical mean and
/// variance. Sensitive levels are the distinct observed value combinations.
pub fn fit_linear_anm(table: &Table, dag: &Dag, sensitive: &[usize]) -> Result<Scm, ScmError> {
    let n = dag.node_count();
    if table.names.len() != n {
        return Err(ScmError::DimensionMismatch {
            expected: n,
            found: table.names.len(),
        });
    }
    let rows = table.rows.len();
    if rows < 2 {
        return Err(ScmError::InvalidData("need at least two rows".into()));
    }
    let mut equations: Vec<Arc<dyn StructuralEquation>> = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let y = table.column(i);
        let parents = dag.parents(i);
        if parents.is_empty() {
            let mean = y.iter().sum::<f64>() / rows as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows - 1) as f64;
            equations.push(Arc::new(AdditiveNoise::root()));
            noise.push(if y.iter().all(|&v| v == 0.0 || v == 1.0) {
                NoiseDist::Bernoulli { p: mean }
            } else {
                NoiseDist::Normal { mean, variance: var }
            });
            continue;
        }
        let k = parents.len() + 1;
        let design: Vec<Vec<f64>> = table
            .rows
            .iter()
            .map(|r| {
                let mut x = Vec::with_capacity(k);
                x.push(1.0);
                x.extend(parents.iter().map(|&p| r[p]));
                x
            })
            .collect();
        let mut xtx = DenseMatrix::zeros(k, k);
        let mut xty = vec![0.0; k];
        for (x, &yi) in design.iter().zip(&y) {
            for a in 0..k {
                xty[a] += x[a] * yi;
                for b in 0..k {
                    xtx[(a, b)] += x[a] * x[b];
                }
            }
        }
        let l = xtx
            .cholesky(1e-10)
            .ok_or(ScmError::SingularDesign { node: i })?;
        let beta = DenseMatrix::cholesky_solve(&l, &xty);
        let ssr: f64 = design
            .iter()
            .zip(&y)
            .map(|(x, &yi)| (yi - crate::nn::dot(x, &beta)).powi(2))
            .sum();
        let dof = rows.saturating_sub(k).max(1);
        equations.push(Arc::new(AdditiveNoise::linear(beta[0], &beta[1..])));
        noise.push(NoiseDist::Normal {
            mean: 0.0,
            variance: ssr / dof as f64,
        });
    }

    let mut sorted = sensitive.to_vec();
    sorted.sort_unstable();
    let mut levels: Vec<Vec<f64>> = vec![Vec::new()];
    for &s in &sorted {
        if s >= n {
            return Err(ScmError::InvalidSensitive(format!("index {s} of {n}")));
        }
        let mut values = table.column(s);
        values.sort_by(f64::total_cmp);
        values.dedup();
        if values.len() > MAX_SENSITIVE_LEVELS {
            return Err(ScmError::InvalidSensitive(format!(
                "column {} has {} distinct values; only finite level sets are supported",
                table.names[s],
                values.len()
            )));
        }
        levels = levels
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&x| {
                    let mut l = prefix.clone();
                    l.push(x);
                    l
                })
            })
            .collect();
    }
    Scm::new("fitted", dag.clone(), equations, noise, table.names.clone())?
        .with_sensitive(&sorted, levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin_table(count: usize, seed: u64) -> Table {
        Table {
            names: vec!["s".into(), "x1".into(), "x2".into()],
            rows: Scm::lin()
                .sample(count, seed)
                .into_iter()
                .map(|(v, _)| v.values)
                .collect(),
        }
    }

    #[test]
    fn recovers_lin_coefficients() {
        let table = lin_table(10_000, 0);
        let dag = Scm::lin().dag().clone();
        let fitted = fit_linear_anm(&table, &dag, &[0]).unwrap();
        // x1 = 2s + u1, x2 = s − x1 + u2.
        let pa_s = [1.0];
        let d1 = fitted.equation(1).parent_derivatives(&pa_s, 0.0);
        let d2 = fitted.equation(2).parent_derivatives(&[1.0, 1.0], 0.0);
        assert!((d1[0] - 2.0).abs() < 0.05, "{d1:?}");
        assert!((d2[0] - 1.0).abs() < 0.05 && (d2[1] + 1.0).abs() < 0.05, "{d2:?}");
        assert!(matches!(fitted.noise_dists()[0], NoiseDist::Bernoulli { .. }));
        assert_eq!(fitted.levels(), &[vec![0.0], vec![1.0]]);
    }

    #[test]
    fn identical_rows_are_singular() {
        let table = Table {
            names: vec!["s".into(), "x1".into(), "x2".into()],
            rows: vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]],
        };
        let dag = Scm::lin().dag().clone();
        assert!(matches!(
            fit_linear_anm(&table, &dag, &[]),
            Err(ScmError::SingularDesign { node: 1 })
        ));
    }

    #[test]
    fn parentless_noise_column() {
        let table = Table {
            names: vec!["z".into()],
            rows: vec![vec![-1.0], vec![1.0], vec![-2.0], vec![2.0]],
        };
        let fitted = fit_linear_anm(&table, &Dag::new(vec![vec![]]).unwrap(), &[]).unwrap();
        assert_eq!(fitted.equation(0).forward(&[], 0.0), 0.0);
        assert_eq!(
            fitted.noise_dists()[0],
            NoiseDist::Normal { mean: 0.0, variance: 10.0 / 3.0 }
        );
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = lin_table(5, 1);
        write_table(&path, &table).unwrap();
        assert_eq!(read_table(&path).unwrap(), table);
    }
}
