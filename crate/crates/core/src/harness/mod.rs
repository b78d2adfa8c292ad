//! Experiment orchestration: config, parallel runs, summary, velocity check
//! and plots.

mod config;
mod experiment;
pub mod plot;
pub mod summary;
pub mod velocity;

use thiserror::Error;

pub use config::{ExperimentConfig, MethodSpec, Overrides, ProposerSpec, ReferenceSpec, EXPERIMENT_SCHEMA};
pub use experiment::{
    build_reference, load_records, preflight, run_experiment, run_method, summarize_dir, ExperimentOutcome, Sidecar,
    RUN_INDEX_FILE,
};
pub use summary::{auc, summarize, MethodSummary, Summary};
pub use velocity::{velocity_sweep, VelocitySweep};

use crate::calib::CalibError;
use crate::error::IoError;
use crate::objective::reference::ReferenceError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_UNREACHABLE: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("reference data: {0}")]
    Reference(#[from] ReferenceError),
    #[error("run {run}: {source}")]
    Calib {
        run: String,
        #[source]
        source: CalibError,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("corrupt record: {0}")]
    CorruptRecord(String),
    #[error("proposer endpoint unreachable: {0}")]
    ProposerUnreachable(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Reference(_) => EXIT_CONFIG,
            HarnessError::ProposerUnreachable(_) => EXIT_UNREACHABLE,
            _ => EXIT_RUNTIME,
        }
    }
}
