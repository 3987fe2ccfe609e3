//! Experiment runner: validated JSON specs, one output directory per run
//! (manifest, result files, summary), and parameter sweeps with derived
//! sub-seeds.
//!
//! Result files are a pure function of the spec, so re-running a spec
//! reproduces them byte for byte; the manifest records their SHA-256
//! digests.

pub mod experiments;
pub mod output;
pub mod spec;
pub mod sweep;

use std::path::{Path, PathBuf};

use mobserv::graph::GraphError;
use mobserv::metastability::MetastabilityError;
use mobserv::nlmp::NlmpError;
use mobserv::sim::SimError;
use mobserv::transit::TransitError;
use thiserror::Error;

pub use experiments::{execute, Artifacts};
pub use output::{run_experiment, Manifest, RunOutcome, MANIFEST_FILE, SUMMARY_FILE};
pub use spec::{Experiment, ExperimentSpec, FieldError, GraphSpec};
pub use sweep::{run_sweep, SweepOutcome, SweepSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_DESCRIBE: &str = env!("MOBSERV_GIT_DESCRIBE");

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid spec:{}", list_fields(.0))]
    Invalid(Vec<FieldError>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Transit(#[from] TransitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nlmp(#[from] NlmpError),
    #[error(transparent)]
    Metastability(#[from] MetastabilityError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} sweep cells failed")]
    SweepFailed { failed: usize, total: usize },
}

fn list_fields(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("\n  {e}")).collect()
}

impl RunnerError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        RunnerError::Invalid(vec![FieldError { field: field.into(), message: message.into() }])
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunnerError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for spec and usage problems, 1 for failures during a run.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunnerError::Invalid(_) => 2,
            _ => 1,
        }
    }
}
