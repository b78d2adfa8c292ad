use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tracker::{EvalTracker, Evaluation};
use super::{accept_stats, AcceptStats, RoundOutcome};
use crate::error::IoError;
use crate::io;
use crate::params::ParamVector;
use crate::swimsim::trajectory::sig9;

pub const RUN_RECORD_SCHEMA: &str = "swimcal.run_record.v1";
pub const CURVE_HEADER: &str = "eval_index,best_loss";

/// Method tags as they appear in every output file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Proposer-driven loop with backtracking.
    #[serde(rename = "swim2real")]
    LineSearch,
    /// Same loop evaluating only the full step.
    #[serde(rename = "swim2real_k1")]
    FullStepOnly,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "cmaes")]
    Cmaes,
    #[serde(rename = "bayesopt")]
    BayesOpt,
    /// One line-searched proposal, then random search.
    #[serde(rename = "warmstart")]
    WarmStart,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::LineSearch,
        Method::FullStepOnly,
        Method::Random,
        Method::Cmaes,
        Method::BayesOpt,
        Method::WarmStart,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::LineSearch => "swim2real",
            Method::FullStepOnly => "swim2real_k1",
            Method::Random => "random",
            Method::Cmaes => "cmaes",
            Method::BayesOpt => "bayesopt",
            Method::WarmStart => "warmstart",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.tag() == tag)
    }

    /// Whether the method runs proposer rounds.
    pub fn uses_proposer(self) -> bool {
        matches!(self, Method::LineSearch | Method::FullStepOnly | Method::WarmStart)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Wall-clock seconds per phase. Excluded from reproducibility comparisons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub evaluate_s: f64,
    pub propose_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub method: Method,
    /// Distinguishes two configurations of the same method in one sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub seed: u64,
    pub budget: usize,
    /// Method configuration as run.
    pub config: serde_json::Value,
    pub initial_theta: ParamVector,
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub initial_loss: f64,
    #[serde(default)]
    pub rounds: Vec<RoundOutcome>,
    pub evaluations: Vec<Evaluation>,
    /// Best loss after each evaluation; index 0 is the first evaluation.
    #[serde(with = "crate::serde_ext::vec_f64_inf_null")]
    pub best_curve: Vec<f64>,
    pub theta_best: ParamVector,
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub loss_best: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept: Option<AcceptStats>,
    #[serde(default)]
    pub proposer_evaluations: usize,
    #[serde(default)]
    pub proposer_failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    /// Notable recoveries (covariance resets, jitter escalation, ...).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunRecord {
    /// Assembles a record from a finished tracker. Fails only if nothing was
    /// evaluated.
    pub(crate) fn from_tracker(
        method: Method,
        seed: u64,
        config: serde_json::Value,
        tracker: EvalTracker<'_>,
        rounds: Vec<RoundOutcome>,
    ) -> RunRecord {
        let budget = tracker.budget();
        let (evaluations, best_curve, best) = tracker.into_parts();
        let first = evaluations.first().expect("at least one evaluation");
        let (theta_best, loss_best) = match best {
            Some((t, r)) => (t, r.loss),
            None => (first.theta.clone(), first.loss),
        };
        let mut record = RunRecord {
            schema: RUN_RECORD_SCHEMA.to_string(),
            method,
            label: None,
            seed,
            budget,
            config,
            initial_theta: first.theta.clone(),
            initial_loss: first.loss,
            rounds,
            evaluations,
            best_curve,
            theta_best,
            loss_best,
            accept: None,
            proposer_evaluations: 0,
            proposer_failures: 0,
            aborted: None,
            events: Vec::new(),
            timing: None,
        };
        if method.uses_proposer() {
            record.accept = Some(accept_stats(&record));
        }
        record
    }

    /// Name used for the record's files: `<label or method>_seed<seed>`.
    pub fn stem(&self) -> String {
        format!("{}_seed{}", self.label.as_deref().unwrap_or(self.method.tag()), self.seed)
    }

    pub fn without_timing(&self) -> RunRecord {
        RunRecord {
            timing: None,
            ..self.clone()
        }
    }

    /// Checks the structural guarantees every terminating run satisfies.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.schema != RUN_RECORD_SCHEMA {
            return Err(format!("unknown schema {:?}", self.schema));
        }
        if self.best_curve.len() != self.evaluations.len() {
            return Err("curve and evaluation log differ in length".into());
        }
        if self.aborted.is_none() && self.best_curve.len() != self.budget {
            return Err(format!(
                "curve has {} entries for budget {}",
                self.best_curve.len(),
                self.budget
            ));
        }
        if self.best_curve.windows(2).any(|w| w[1] > w[0]) {
            return Err("best-so-far curve increases".into());
        }
        let mut running = f64::INFINITY;
        for (e, c) in self.evaluations.iter().zip(&self.best_curve) {
            running = running.min(e.loss);
            if running != *c && !(running.is_infinite() && c.is_infinite()) {
                return Err("curve is not the running minimum of the evaluations".into());
            }
        }
        match self.best_curve.last() {
            Some(&last) if last == self.loss_best || (last.is_infinite() && self.loss_best.is_infinite()) => {}
            _ => return Err("loss_best differs from the last curve value".into()),
        }
        let round_evals: usize = self.rounds.iter().map(|r| r.evaluations).sum();
        if !self.rounds.is_empty() && round_evals + 1 > self.evaluations.len() {
            return Err("rounds account for more evaluations than were logged".into());
        }
        Ok(())
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for (i, v) in self.best_curve.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, sig9(*v)));
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<(), IoError> {
        io::write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<RunRecord, IoError> {
        io::read_json(path)
    }

    pub fn write_curve_csv(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, self.curve_csv().as_bytes())
    }
}

/// Parses an `eval_index,best_loss` CSV into its values, checking the index
/// column counts up from 1.
pub fn parse_curve_csv(text: &str) -> Result<Vec<f64>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CURVE_HEADER) {
        return Err("missing curve header".into());
    }
    let mut values = Vec::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let (idx, v) = line.split_once(',').ok_or_else(|| format!("bad row {line:?}"))?;
        if idx.trim().parse::<usize>().ok() != Some(i + 1) {
            return Err(format!("row {} has index {idx}", i + 1));
        }
        values.push(v.trim().parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1))?);
    }
    Ok(values)
}
