//! Run reports, seed aggregation and plot data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::Task;

pub const SCHEMA_VERSION: &str = "cfm-report-v1";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report has no rows")]
    EmptyReport,
    #[error("row has {found} values but the report has {expected} metrics")]
    RowWidth { expected: usize, found: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One `(dataset, variant, Δ, seed)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    /// Method, scenario or the empty string, depending on the task.
    pub variant: String,
    pub delta: f64,
    pub seed: u64,
    pub values: Vec<f64>,
}

/// Mean and sample standard deviation over the seeds of one cell group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub variant: String,
    pub delta: f64,
    pub n: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    /// Column name for [`ReportRow::variant`].
    pub variant_key: String,
    pub metrics: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl RunReport {
    pub fn new(task: Task, variant_key: &str, metrics: &[&str], rows: Vec<ReportRow>) -> Result<Self, ReportError> {
        if let Some(r) = rows.iter().find(|r| r.values.len() != metrics.len()) {
            return Err(ReportError::RowWidth {
                expected: metrics.len(),
                found: r.values.len(),
            });
        }
        let aggregates = aggregate(&rows, metrics.len());
        Ok(Self {
            task,
            variant_key: variant_key.to_string(),
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
            rows,
            aggregates,
        })
    }

    /// Keys of one per-seed row object, in CSV column order.
    pub fn row_header(&self) -> Vec<String> {
        let mut h = vec!["dataset".to_string(), self.variant_key.clone(), "delta".into(), "seed".into()];
        h.extend(self.metrics.iter().cloned());
        h
    }

    pub fn aggregate_header(&self) -> Vec<String> {
        let mut h = vec!["dataset".to_string(), self.variant_key.clone(), "delta".into(), "n".into()];
        for m in &self.metrics {
            h.push(format!("{m}_mean"));
            h.push(format!("{m}_std"));
        }
        h
    }

    /// Deterministic JSON document; key order within objects is sorted.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut o = Map::new();
                o.insert("dataset".into(), json!(r.dataset));
                o.insert(self.variant_key.clone(), json!(r.variant));
                o.insert("delta".into(), json!(r.delta));
                o.insert("seed".into(), json!(r.seed));
                for (m, v) in self.metrics.iter().zip(&r.values) {
                    o.insert(m.clone(), json!(v));
                }
                Value::Object(o)
            })
            .collect();
        let aggregates: Vec<Value> = self
            .aggregates
            .iter()
            .map(|a| {
                let mut o = Map::new();
                o.insert("dataset".into(), json!(a.dataset));
                o.insert(self.variant_key.clone(), json!(a.variant));
                o.insert("delta".into(), json!(a.delta));
                o.insert("n".into(), json!(a.n));
                for (k, m) in self.metrics.iter().enumerate() {
                    o.insert(m.clone(), json!({"mean": a.mean[k], "std": a.std[k]}));
                }
                Value::Object(o)
            })
            .collect();
        let doc = json!({
            "schema": SCHEMA_VERSION,
            "task": self.task.name(),
            "rows": rows,
            "aggregates": aggregates,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report values serialize");
        s.push('\n');
        s
    }

    pub fn rows_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.row_header())?;
        for r in &self.rows {
            let mut rec = vec![r.dataset.clone(), r.variant.clone(), r.delta.to_string(), r.seed.to_string()];
            rec.extend(r.values.iter().map(f64::to_string));
            w.write_record(rec)?;
        }
        finish(w)
    }

    pub fn aggregate_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.aggregate_header())?;
        for a in &self.aggregates {
            let mut rec = vec![a.dataset.clone(), a.variant.clone(), a.delta.to_string(), a.n.to_string()];
            for (m, s) in a.mean.iter().zip(&a.std) {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            w.write_record(rec)?;
        }
        finish(w)
    }

    /// Name of the figure this report feeds.
    pub fn figure(&self) -> &'static str {
        match self.task {
            Task::GenData => "datasets",
            Task::TrainMetric | Task::EvalMetric => "metric_learning",
            Task::TrainClf | Task::EvalClf | Task::Report => "fairness",
        }
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is built from UTF-8 strings"))
}

/// Groups rows by `(dataset, variant, Δ)` in first-seen order.
fn aggregate(rows: &[ReportRow], width: usize) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, String, u64), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.dataset.clone(), r.variant.clone(), r.delta.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let (mean, std) = (0..width)
                .map(|k| mean_std(&g.iter().map(|r| r.values[k]).collect::<Vec<_>>()))
                .unzip();
            AggregateRow {
                dataset: key.0,
                variant: key.1,
                delta: f64::from_bits(key.2),
                n: g.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Sample mean and standard deviation (`n − 1` denominator, 0 for one value).
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const PLOT_HEADER: [&str; 4] = ["panel", "group", "value", "ci"];

/// Long-format plot tables keyed by figure name: one line per aggregate row
/// and metric, with the seed standard deviation as `ci`.
pub fn emit_plot_data(report: &RunReport) -> Result<BTreeMap<String, String>, ReportError> {
    if report.rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PLOT_HEADER)?;
    for (k, m) in report.metrics.iter().enumerate() {
        for a in &report.aggregates {
            let group = if a.variant.is_empty() {
                format!("{}/{}", a.dataset, a.delta)
            } else {
                format!("{}/{}/{}", a.dataset, a.variant, a.delta)
            };
            w.write_record([m.clone(), group, a.mean[k].to_string(), a.std[k].to_string()])?;
        }
    }
    let mut out = BTreeMap::new();
    out.insert(report.figure().to_string(), finish(w)?);
    Ok(out)
}
