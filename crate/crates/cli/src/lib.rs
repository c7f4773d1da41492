//! Configuration-driven experiment runner for the `cfm` binary.

pub mod config;
pub mod report;
pub mod runner;

use std::path::PathBuf;

use cfm_core::fairness::FairnessError;
use cfm_core::learning::LearningError;
use cfm_core::metric::MetricError;
use cfm_core::nn::NnError;
use cfm_core::scm::ScmError;
use serde_json::json;

pub use config::{ExperimentConfig, Overrides, Task};
pub use report::{emit_plot_data, ReportError, RunReport};
pub use runner::{run, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    ConfigParse(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigParse(_) => "ConfigParse",
            CliError::MissingFile(_) => "MissingFile",
            CliError::Config(_) => "Config",
            CliError::Scm(_) => "Scm",
            CliError::Metric(_) => "Metric",
            CliError::Learning(_) => "Learning",
            CliError::Fairness(_) => "Fairness",
            CliError::Nn(_) => "Nn",
            CliError::Report(_) => "Report",
            CliError::Io(_) => "Io",
        }
    }

    /// Settings rejected by a module count as configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse(_)
            | CliError::MissingFile(_)
            | CliError::Config(_)
            | CliError::Learning(LearningError::Config(_))
            | CliError::Fairness(FairnessError::Config(_)) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }

    /// One-line machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}
