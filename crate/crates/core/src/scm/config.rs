use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{fit_linear_anm, read_table, Dag, Scm, ScmError, SelectorVariant, DEFAULT_SELECTOR_N};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinScm {
    Lin,
    Nlm,
    Example1,
    Example2a,
    Example2b,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub csv: PathBuf,
    pub dag: Vec<Vec<usize>>,
    pub sensitive: Vec<usize>,
}

/// Model selection as written in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScmSpec {
    Builtin {
        builtin: BuiltinScm,
        /// Range of the selector noise in the two-variant model.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<f64>,
    },
    Fit {
        fit: FitSpec,
    },
}

impl ScmSpec {
    pub fn builtin(b: BuiltinScm) -> Self {
        ScmSpec::Builtin { builtin: b, n: None }
    }

    pub fn build(&self) -> Result<Scm, ScmError> {
        match self {
            ScmSpec::Builtin { builtin, n } => {
                let n = n.unwrap_or(DEFAULT_SELECTOR_N);
                if !(n > 0.0 && n.is_finite()) {
                    return Err(ScmError::Config(format!("selector range {n} must be positive")));
                }
                Ok(match builtin {
                    BuiltinScm::Lin => Scm::lin(),
                    BuiltinScm::Nlm => Scm::nlm(),
                    BuiltinScm::Example1 => Scm::example1(),
                    BuiltinScm::Example2a => Scm::example2(SelectorVariant::A, n),
                    BuiltinScm::Example2b => Scm::example2(SelectorVariant::B, n),
                })
            }
            ScmSpec::Fit { fit } => {
                let table = read_table(&fit.csv)?;
                let dag = Dag::new(fit.dag.clone())?;
                fit_linear_anm(&table, &dag, &fit.sensitive)
            }
        }
    }
}
