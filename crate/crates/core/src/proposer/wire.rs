//! JSON messages exchanged with a remote proposer over `POST /propose`.
//!
//! Non-finite numbers travel as `null`.

use serde::{Deserialize, Serialize};

use super::{HistoryEntry, ProposerContext};
use crate::params::{Dimension, ParamVector};

pub const PROTOCOL_VERSION: &str = "1";
pub const PROPOSE_PATH: &str = "/propose";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireVelocities {
    pub sim: Vec<Option<f64>>,
    pub real: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireHistoryEntry {
    pub delta: Vec<f64>,
    pub step_multiplier: Option<f64>,
    pub accepted: bool,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposeRequest {
    pub protocol_version: String,
    pub round: usize,
    pub budget_remaining: usize,
    pub bounds: Vec<Dimension>,
    pub theta_best: Vec<f64>,
    pub loss_best: Option<f64>,
    pub error_matrix: Vec<Vec<Option<f64>>>,
    pub frequencies_hz: Vec<f64>,
    pub velocities: WireVelocities,
    pub worst_frequency_hz: Option<f64>,
    pub history: Vec<WireHistoryEntry>,
    pub attachments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeResponse {
    pub theta_proposed: Vec<f64>,
    #[serde(default)]
    pub rationale: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&HistoryEntry> for WireHistoryEntry {
    fn from(h: &HistoryEntry) -> Self {
        Self {
            delta: h.delta.0.clone(),
            step_multiplier: h.step_multiplier,
            accepted: h.accepted,
            loss: h.loss.and_then(finite),
        }
    }
}

impl From<&ProposerContext> for ProposeRequest {
    fn from(ctx: &ProposerContext) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION.to_string(),
            round: ctx.round,
            budget_remaining: ctx.budget_remaining,
            bounds: ctx.bounds.dims().to_vec(),
            theta_best: ctx.theta_best.0.clone(),
            loss_best: finite(ctx.loss_best),
            error_matrix: ctx
                .error_matrix
                .iter()
                .map(|row| row.iter().map(|&v| finite(v)).collect())
                .collect(),
            frequencies_hz: ctx.frequencies.clone(),
            velocities: WireVelocities {
                sim: ctx.sim_velocities.iter().map(|v| v.and_then(finite)).collect(),
                real: ctx.real_velocities.clone(),
            },
            worst_frequency_hz: ctx.worst_frequency,
            history: ctx.history.iter().map(WireHistoryEntry::from).collect(),
            attachments: ctx.attachments.clone(),
        }
    }
}

impl ProposeRequest {
    /// Structural checks a server can apply to an incoming request.
    pub fn validate(&self) -> Result<(), String> {
        if self.protocol_version != PROTOCOL_VERSION {
            return Err(format!("unsupported protocol version {:?}", self.protocol_version));
        }
        let d = self.bounds.len();
        if self.theta_best.len() != d {
            return Err(format!("theta_best has {} entries for {d} bounds", self.theta_best.len()));
        }
        let f = self.frequencies_hz.len();
        if !self.error_matrix.is_empty() && self.error_matrix.len() != f {
            return Err("error_matrix rows do not match frequencies".into());
        }
        if !self.velocities.sim.is_empty() && self.velocities.sim.len() != f {
            return Err("velocities.sim does not match frequencies".into());
        }
        if self.history.iter().any(|h| h.delta.len() != d) {
            return Err("history delta has the wrong dimension".into());
        }
        Ok(())
    }
}

impl ProposeResponse {
    pub fn theta(&self) -> ParamVector {
        ParamVector(self.theta_proposed.clone())
    }
}
