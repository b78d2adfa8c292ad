//! Direction proposers for the calibration loop.
//!
//! A proposer sees the current best point, its diagnostics and the history
//! of earlier rounds, and returns a candidate point. The loop turns the
//! candidate into a search direction and validates it with a line search,
//! so proposers only need to get the direction roughly right.

mod oracle;
mod remote;
mod replay;
mod spsa;
pub mod stub;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::GroundTruthOracle;
pub use remote::{RemoteConfig, RemoteProposer};
pub use replay::ReplayProposer;
pub use spsa::SpsaOracle;

use crate::objective::EvalResult;
use crate::params::{ParamBounds, ParamVector};
use crate::swimsim::MARKER_COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposerError {
    #[error("proposer endpoint timed out after {attempts} attempt(s)")]
    Timeout { attempts: usize },
    #[error("proposer endpoint returned HTTP {status} after {attempts} attempt(s)")]
    Status { status: u16, attempts: usize },
    #[error("proposer transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: usize },
    #[error("malformed proposer reply ({reason}); body: {body}")]
    Malformed { reason: String, body: String },
    #[error("replay log exhausted at round {0}")]
    ReplayExhausted(usize),
    #[error("proposer returned a non-finite or mis-sized vector: {0}")]
    InvalidProposal(String),
}

/// One completed round as seen by later rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub delta: ParamVector,
    /// `beta^k` of the accepted step; `None` when the round was rejected.
    pub step_multiplier: Option<f64>,
    pub accepted: bool,
    /// Loss after acceptance.
    pub loss: Option<f64>,
}

/// Everything a proposer is shown at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposerContext {
    pub round: usize,
    pub budget_remaining: usize,
    pub theta_best: ParamVector,
    /// `+inf` when every evaluation so far diverged.
    pub loss_best: f64,
    pub bounds: ParamBounds,
    pub frequencies: Vec<f64>,
    /// Per-frequency, per-marker errors of `theta_best` (meters).
    pub error_matrix: Vec<[f64; MARKER_COUNT]>,
    pub sim_velocities: Vec<Option<f64>>,
    pub real_velocities: Vec<f64>,
    pub worst_frequency: Option<f64>,
    pub history: Vec<HistoryEntry>,
    /// Opaque references (e.g. rendered overlays) a remote backend may fetch.
    pub attachments: Vec<String>,
}

impl ProposerContext {
    pub fn new(
        round: usize,
        budget_remaining: usize,
        theta_best: ParamVector,
        best: &EvalResult,
        bounds: ParamBounds,
        real_velocities: Vec<f64>,
        history: Vec<HistoryEntry>,
    ) -> Self {
        Self {
            round,
            budget_remaining,
            theta_best,
            loss_best: best.loss,
            bounds,
            frequencies: best.frequencies.clone(),
            error_matrix: best.error_matrix.clone(),
            sim_velocities: best.sim_velocities.clone(),
            real_velocities,
            worst_frequency: best.worst_frequency(),
            history,
            attachments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// Candidate in physical units; need not be feasible.
    pub theta: ParamVector,
    pub rationale: String,
    pub proposer: String,
}

pub trait Proposer {
    fn name(&self) -> &str;

    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError>;

    /// Objective evaluations the proposer ran on its own account. These are
    /// never charged to the calibration budget.
    fn internal_evaluations(&self) -> usize {
        0
    }
}

pub(crate) fn check_proposal(theta: &ParamVector, bounds: &ParamBounds) -> Result<(), ProposerError> {
    if theta.len() != bounds.dim() {
        return Err(ProposerError::InvalidProposal(format!(
            "expected {} components, got {}",
            bounds.dim(),
            theta.len()
        )));
    }
    theta
        .check_finite()
        .map_err(|e| ProposerError::InvalidProposal(e.to_string()))
}
