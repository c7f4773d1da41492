//! Expands a configuration into independent cells, runs them on a thread
//! pool, and writes artifacts and reports.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use cfm_core::fairness::{
    eval_fairness, train_classifier, Classifier, LabeledDataset, Method, TwinSource,
};
use cfm_core::learning::{
    build_pairs, build_triplets, eval_metric, read_pairs, train_metric, LearnedMetric, MetricData,
    MetricReport, PairMode, Scenario, TrainLog,
};
use cfm_core::scm::{ScmError, Table};
use cfm_core::{rng, OracleMetric, Scm};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Task};
use crate::report::{emit_plot_data, ReportRow, RunReport};
use crate::CliError;

pub const THREADS_ENV: &str = "CFM_THREADS";

pub const FAIRNESS_METRICS: [&str; 5] = ["acc", "mcc", "unfair_area", "cf_unfair_area", "nonrobust_area"];
pub const DATA_METRICS: [&str; 2] = ["rows", "columns"];

#[derive(Clone, Copy, Debug)]
enum Cell {
    Data { model: usize, seed: u64 },
    Metric { model: usize, scenario: Scenario, delta: f64, seed: u64 },
    Clf { model: usize, method: Method, delta: f64, seed: u64 },
}

/// Paths of the files a run wrote.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub task: &'static str,
    pub rows: usize,
    pub report: PathBuf,
    pub rows_csv: PathBuf,
    pub aggregate_csv: PathBuf,
    pub plots: Vec<PathBuf>,
    pub metadata: PathBuf,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    task: Task,
    oracles: Vec<OracleMetric>,
    out: PathBuf,
}

/// Worker count from `CFM_THREADS`, or `None` for the rayon default.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(None),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let task = cfg.task()?;
    let threads = threads_from_env()?;
    let started = SystemTime::now();
    let clock = Instant::now();

    let mut oracles = Vec::new();
    for spec in cfg.scm.to_vec() {
        let scm = spec.build().map_err(|e| match e {
            ScmError::Config(m) => CliError::Config(m),
            e => CliError::Scm(e),
        })?;
        let oracle = OracleMetric::new(scm, cfg.metric.base.clone())
            .map_err(|e| CliError::Config(format!("metric: {e}")))?;
        oracles.push(oracle);
    }
    let ctx = Context {
        cfg,
        task,
        oracles,
        out: cfg.output.clone(),
    };
    let cells = ctx.cells();
    if cfg.model.is_some() && cells.len() != 1 {
        return Err(CliError::Config(format!(
            "an explicit model path needs exactly one cell, the config expands to {}",
            cells.len()
        )));
    }
    for dir in ["datasets", "checkpoints", "logs", "reports", "plots"] {
        std::fs::create_dir_all(ctx.out.join(dir))?;
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    log::info!("{}: {} cells on {} threads", task.name(), cells.len(), pool.current_num_threads());
    let results: Vec<Result<ReportRow, CliError>> =
        pool.install(|| cells.par_iter().map(|c| ctx.run_cell(c)).collect());
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let (key, metrics): (&str, &[&str]) = match task {
        Task::GenData => ("kind", &DATA_METRICS),
        Task::TrainMetric | Task::EvalMetric => ("scenario", &MetricReport::CSV_HEADER),
        Task::TrainClf | Task::EvalClf | Task::Report => ("method", &FAIRNESS_METRICS),
    };
    let report = RunReport::new(task, key, metrics, rows)?;
    let reports = ctx.out.join("reports");
    let name = task.name();
    let summary_paths = (
        reports.join(format!("{name}.json")),
        reports.join(format!("{name}.csv")),
        reports.join(format!("{name}_aggregate.csv")),
        reports.join(format!("{name}.meta.json")),
    );
    std::fs::write(&summary_paths.0, report.to_json())?;
    std::fs::write(&summary_paths.1, report.rows_csv()?)?;
    std::fs::write(&summary_paths.2, report.aggregate_csv()?)?;
    let mut plots = Vec::new();
    for (figure, csv) in emit_plot_data(&report)? {
        let p = ctx.out.join("plots").join(format!("{figure}.csv"));
        std::fs::write(&p, csv)?;
        plots.push(p);
    }

    let meta = json!({
        "schema": crate::report::SCHEMA_VERSION,
        "task": name,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": pool.current_num_threads(),
        "cells": cells.len(),
        "config": cfg,
    });
    std::fs::write(&summary_paths.3, serde_json::to_string_pretty(&meta).expect("metadata serializes"))?;
    Ok(RunSummary {
        task: name,
        rows: report.rows.len(),
        report: summary_paths.0,
        rows_csv: summary_paths.1,
        aggregate_csv: summary_paths.2,
        plots,
        metadata: summary_paths.3,
    })
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Distance => "distance",
        Scenario::Label => "label",
        Scenario::Triplet => "triplet",
    }
}

impl Context<'_> {
    fn cells(&self) -> Vec<Cell> {
        let seeds = self.cfg.seeds.to_vec();
        let deltas = self.cfg.deltas();
        let mut cells = Vec::new();
        for model in 0..self.oracles.len() {
            match self.task {
                Task::GenData => cells.extend(seeds.iter().map(|&seed| Cell::Data { model, seed })),
                Task::TrainMetric | Task::EvalMetric => {
                    for scenario in self.cfg.scenario.to_vec() {
                        for &delta in &deltas {
                            for &seed in &seeds {
                                cells.push(Cell::Metric { model, scenario, delta, seed });
                            }
                        }
                    }
                }
                Task::TrainClf | Task::EvalClf | Task::Report => {
                    for method in self.cfg.method.to_vec() {
                        for &delta in &deltas {
                            for &seed in &seeds {
                                cells.push(Cell::Clf { model, method, delta, seed });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    fn scm(&self, model: usize) -> &Scm {
        self.oracles[model].scm()
    }

    fn path(&self, dir: &str, file: String) -> PathBuf {
        self.out.join(dir).join(file)
    }

    fn run_cell(&self, cell: &Cell) -> Result<ReportRow, CliError> {
        log::debug!("cell {cell:?}");
        match *cell {
            Cell::Data { model, seed } => self.gen_data(model, seed),
            Cell::Metric { model, scenario, delta, seed } => {
                let report = match self.task {
                    Task::EvalMetric => self.eval_metric(model, scenario, delta, seed)?,
                    _ => self.train_metric(model, scenario, delta, seed)?,
                };
                Ok(ReportRow {
                    dataset: self.scm(model).name().to_string(),
                    variant: scenario_name(scenario).to_string(),
                    delta,
                    seed,
                    values: vec![
                        report.n as f64,
                        report.acc,
                        report.fn_rate,
                        report.fp_rate,
                        report.mcc,
                        report.mae,
                        report.rmse,
                    ],
                })
            }
            Cell::Clf { model, method, delta, seed } => {
                let (clf, data) = match self.task {
                    Task::EvalClf => self.load_classifier(model, method, delta, seed)?,
                    _ => self.train_classifier(model, method, delta, seed)?,
                };
                let r = eval_fairness(
                    &clf,
                    &self.oracles[model],
                    &data.test_instances(),
                    &data.test_labels(),
                    delta,
                    self.cfg.probes,
                    seed,
                )?;
                Ok(ReportRow {
                    dataset: self.scm(model).name().to_string(),
                    variant: method.name().to_string(),
                    delta,
                    seed,
                    values: vec![r.acc, r.mcc, r.unfair_area, r.cf_unfair_area, r.nonrobust_area],
                })
            }
        }
    }

    fn gen_data(&self, model: usize, seed: u64) -> Result<ReportRow, CliError> {
        let scm = self.scm(model);
        let table = Table {
            names: scm.feature_names().to_vec(),
            rows: scm.sample(self.cfg.count, seed).into_iter().map(|(v, _)| v.values).collect(),
        };
        let path = self.path("datasets", format!("{}_s{seed}.csv", scm.name()));
        cfm_core::scm::write_table(&path, &table)?;
        Ok(ReportRow {
            dataset: scm.name().to_string(),
            variant: "instances".into(),
            delta: 0.0,
            seed,
            values: vec![table.rows.len() as f64, table.names.len() as f64],
        })
    }

    fn metric_checkpoint(&self, model: usize, scenario: Scenario, delta: f64, seed: u64) -> PathBuf {
        let name = self.scm(model).name();
        self.path("checkpoints", format!("metric_{name}_{}_d{delta}_s{seed}.json", scenario_name(scenario)))
    }

    fn test_pairs(&self, model: usize, delta: f64, seed: u64) -> Result<Vec<cfm_core::learning::PairExample>, CliError> {
        if let Some(p) = &self.cfg.pairs {
            return Ok(read_pairs(p, self.scm(model).node_count())?);
        }
        let test_seed = rng::derive_seed(seed, "metric-test-pairs");
        Ok(build_pairs(&self.oracles[model], delta, self.cfg.test_pairs, test_seed, PairMode::Distance)?)
    }

    fn fit_metric(&self, model: usize, scenario: Scenario, delta: f64, seed: u64) -> Result<(LearnedMetric, TrainLog), CliError> {
        let oracle = &self.oracles[model];
        let mcfg = self.cfg.metric_train_config(scenario, delta, seed);
        let data = match scenario {
            Scenario::Distance => MetricData::Pairs(build_pairs(oracle, delta, mcfg.examples, seed, PairMode::Distance)?),
            Scenario::Label => MetricData::Pairs(build_pairs(oracle, delta, mcfg.examples, seed, PairMode::Label)?),
            Scenario::Triplet => MetricData::Triplets(build_triplets(oracle, delta, mcfg.examples, seed)?),
        };
        Ok(train_metric(oracle, &mcfg, &data)?)
    }

    fn train_metric(&self, model: usize, scenario: Scenario, delta: f64, seed: u64) -> Result<MetricReport, CliError> {
        let (lm, log) = self.fit_metric(model, scenario, delta, seed)?;
        let ckpt = self.metric_checkpoint(model, scenario, delta, seed);
        std::fs::write(&ckpt, lm.to_json())?;
        let stem = ckpt.file_stem().expect("checkpoint has a file name").to_string_lossy().into_owned();
        write_log(&self.path("logs", format!("{stem}.csv")), &TrainLog::CSV_HEADER, &log.epochs)?;
        let test = self.test_pairs(model, delta, seed)?;
        Ok(eval_metric(&lm, &self.oracles[model], delta, &test)?)
    }

    fn eval_metric(&self, model: usize, scenario: Scenario, delta: f64, seed: u64) -> Result<MetricReport, CliError> {
        let path = match &self.cfg.model {
            Some(p) => p.clone(),
            None => self.metric_checkpoint(model, scenario, delta, seed),
        };
        let lm = LearnedMetric::from_json(&read_file(&path)?)?;
        let test = self.test_pairs(model, delta, seed)?;
        Ok(eval_metric(&lm, &self.oracles[model], delta, &test)?)
    }

    fn dataset(&self, model: usize, seed: u64) -> Result<LabeledDataset, CliError> {
        Ok(LabeledDataset::synthetic(self.scm(model), self.cfg.count, self.cfg.test_fraction, seed)?)
    }

    fn clf_checkpoint(&self, model: usize, method: Method, delta: f64, seed: u64) -> PathBuf {
        let name = self.scm(model).name();
        let m = method.name().to_lowercase();
        self.path("checkpoints", format!("clf_{name}_{m}_d{delta}_s{seed}.json"))
    }

    fn train_classifier(
        &self,
        model: usize,
        method: Method,
        delta: f64,
        seed: u64,
    ) -> Result<(Classifier, LabeledDataset), CliError> {
        let oracle = &self.oracles[model];
        let data = self.dataset(model, seed)?;
        let source = match method {
            Method::Capify => Some(TwinSource::Oracle(oracle)),
            Method::Ecapify => {
                let (lm, _) = self.fit_metric(model, Scenario::Distance, self.cfg.metric_delta, seed)?;
                let name = oracle.scm().name();
                let md = self.cfg.metric_delta;
                std::fs::write(
                    self.path("checkpoints", format!("twin_metric_{name}_d{md}_s{seed}.json")),
                    lm.to_json(),
                )?;
                Some(TwinSource::estimate(&lm, oracle.scm().sensitive(), &data)?)
            }
            Method::Erm | Method::Al => None,
        };
        let tcfg = self.cfg.trainer_config(method, delta, seed);
        let (clf, log) = train_classifier(&data, &tcfg, source.as_ref())?;
        let ckpt = self.clf_checkpoint(model, method, delta, seed);
        std::fs::write(&ckpt, clf.to_json())?;
        let stem = ckpt.file_stem().expect("checkpoint has a file name").to_string_lossy().into_owned();
        write_log(&self.path("logs", format!("{stem}.csv")), &CLASSIFIER_LOG_HEADER, &log.epochs)?;
        Ok((clf, data))
    }

    fn load_classifier(
        &self,
        model: usize,
        method: Method,
        delta: f64,
        seed: u64,
    ) -> Result<(Classifier, LabeledDataset), CliError> {
        let path = match &self.cfg.model {
            Some(p) => p.clone(),
            None => self.clf_checkpoint(model, method, delta, seed),
        };
        let clf = Classifier::from_json(&read_file(&path)?)?;
        Ok((clf, self.dataset(model, seed)?))
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
        _ => CliError::Io(e),
    })
}

pub const CLASSIFIER_LOG_HEADER: [&str; 4] = ["epoch", "loss", "bce", "regularizer"];

/// Header first so an empty log still names its columns.
fn write_log<T: Serialize>(path: &Path, header: &[&str], epochs: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(crate::report::ReportError::from)?;
    w.write_record(header).map_err(crate::report::ReportError::from)?;
    for e in epochs {
        w.serialize(e).map_err(crate::report::ReportError::from)?;
    }
    w.flush()?;
    Ok(())
}
