//! Proposer-driven calibration with a backtracking line search.
//!
//! Each round the proposer suggests a point `theta'`; the loop takes the
//! direction `delta = theta' - theta_best` and evaluates
//! `clip(theta_best + beta^k * delta)` for `k = 0, 1, ..` until one strictly
//! improves on the incumbent or `K` steps (or the budget) run out.

mod record;
mod tracker;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{parse_curve_csv, Method, RunRecord, Timing, CURVE_HEADER, RUN_RECORD_SCHEMA};
pub use tracker::{EvalTracker, Evaluation};

use crate::objective::{EvalError, EvalResult, Evaluator};
use crate::params::{ParamError, ParamVector};
use crate::proposer::{check_proposal, HistoryEntry, Proposal, Proposer, ProposerContext, ProposerError};

/// Consecutive proposer failures after which a run is abandoned.
pub const MAX_CONSECUTIVE_FAILURES: usize = 5;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("surrogate model failure: {0}")]
    Surrogate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearchConfig {
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_decay() -> f64 {
    0.5
}

fn default_max_steps() -> usize {
    3
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            decay: default_decay(),
            max_steps: default_max_steps(),
        }
    }
}

impl LineSearchConfig {
    /// Evaluates only the full step.
    pub fn full_step_only() -> Self {
        Self {
            max_steps: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CalibError> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(CalibError::Config(format!("decay {} not in (0, 1)", self.decay)));
        }
        if self.max_steps == 0 {
            return Err(CalibError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn multiplier(&self, k: usize) -> f64 {
        self.decay.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrial {
    pub multiplier: f64,
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    /// What the proposer returned; kept so a run can be replayed.
    pub proposal: Proposal,
    pub delta: ParamVector,
    pub trials: Vec<StepTrial>,
    pub accepted: bool,
    pub accepted_multiplier: Option<f64>,
    pub evaluations: usize,
}

/// Multiplier, point and result of an accepted step.
pub type AcceptedStep = (f64, ParamVector, EvalResult);

/// Runs one backtracking line search from `theta_best` along `delta`.
///
/// Returns the evaluated steps and, on acceptance, the multiplier, point and
/// result that replaced the incumbent.
pub fn backtrack(
    theta_best: &ParamVector,
    loss_best: f64,
    delta: &ParamVector,
    cfg: &LineSearchConfig,
    tracker: &mut EvalTracker<'_>,
) -> Result<(Vec<StepTrial>, Option<AcceptedStep>), CalibError> {
    cfg.validate()?;
    if tracker.remaining() == 0 {
        return Err(CalibError::BudgetExhausted);
    }
    let bounds = tracker.bounds().clone();
    // With a zero direction all candidates coincide with theta_best.
    let steps = if delta.is_zero() { 1 } else { cfg.max_steps };
    let mut trials = Vec::new();
    for k in 0..steps.min(tracker.remaining()) {
        let m = cfg.multiplier(k);
        let candidate = bounds.clip(&theta_best.add_scaled(m, delta))?;
        let result = tracker.evaluate(&candidate)?;
        trials.push(StepTrial {
            multiplier: m,
            loss: result.loss,
        });
        if result.loss < loss_best {
            return Ok((trials, Some((m, candidate, result))));
        }
    }
    Ok((trials, None))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CalibOptions {
    pub line_search: LineSearchConfig,
    /// Stop after this many rounds even if budget remains.
    pub max_rounds: Option<usize>,
}

/// State carried out of [`calibrate`] so another method can continue from it.
pub struct CalibState {
    pub rounds: Vec<RoundOutcome>,
    pub failures: usize,
    pub aborted: Option<String>,
    pub propose_time: Duration,
}

/// Runs the loop on an existing tracker, starting with the tracker's first
/// evaluation (or `init` if nothing was evaluated yet).
pub fn calibrate(
    opts: &CalibOptions,
    proposer: &mut dyn Proposer,
    tracker: &mut EvalTracker<'_>,
    init: &ParamVector,
) -> Result<CalibState, CalibError> {
    opts.line_search.validate()?;
    if tracker.used() == 0 {
        tracker.evaluate(init)?;
    }
    let (mut theta_best, mut best) = tracker.best().cloned().expect("initialized");
    let real_velocities = tracker
        .evaluator()
        .reference_velocities()
        .map(<[f64]>::to_vec)
        .unwrap_or_default();
    let mut state = CalibState {
        rounds: Vec::new(),
        failures: 0,
        aborted: None,
        propose_time: Duration::ZERO,
    };
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut consecutive = 0;
    while tracker.remaining() > 0 && opts.max_rounds.is_none_or(|m| state.rounds.len() < m) {
        let round = state.rounds.len();
        let ctx = ProposerContext::new(
            round,
            tracker.remaining(),
            theta_best.clone(),
            &best,
            tracker.bounds().clone(),
            real_velocities.clone(),
            history.clone(),
        );
        let start = Instant::now();
        let proposed = proposer
            .propose(&ctx)
            .and_then(|p| check_proposal(&p.theta, tracker.bounds()).map(|_| p));
        state.propose_time += start.elapsed();
        let proposal = match proposed {
            Ok(p) => {
                consecutive = 0;
                p
            }
            Err(e) => {
                state.failures += 1;
                consecutive += 1;
                if consecutive >= MAX_CONSECUTIVE_FAILURES {
                    state.aborted = Some(abort_reason(&e));
                    break;
                }
                continue;
            }
        };
        let delta = proposal.theta.sub(&theta_best);
        let (trials, accepted) = backtrack(&theta_best, best.loss, &delta, &opts.line_search, tracker)?;
        let accepted_multiplier = accepted.as_ref().map(|(m, _, _)| *m);
        if let Some((_, theta, result)) = accepted {
            theta_best = theta;
            best = result;
        }
        history.push(HistoryEntry {
            delta: delta.clone(),
            step_multiplier: accepted_multiplier,
            accepted: accepted_multiplier.is_some(),
            loss: Some(best.loss),
        });
        state.rounds.push(RoundOutcome {
            round,
            proposal,
            delta,
            evaluations: trials.len(),
            trials,
            accepted: accepted_multiplier.is_some(),
            accepted_multiplier,
        });
    }
    Ok(state)
}

fn abort_reason(last: &ProposerError) -> String {
    format!("{MAX_CONSECUTIVE_FAILURES} consecutive proposer failures; last: {last}")
}

/// Full calibration run: seeded random init, then proposer rounds until the
/// budget is spent.
pub fn run_calibration(
    opts: &CalibOptions,
    proposer: &mut dyn Proposer,
    evaluator: &dyn Evaluator,
    budget: usize,
    seed: u64,
) -> Result<RunRecord, CalibError> {
    if budget == 0 {
        return Err(CalibError::Config("budget must be at least 1".into()));
    }
    let start = Instant::now();
    let init = evaluator.bounds().random_init(seed);
    let mut tracker = EvalTracker::new(evaluator, budget);
    let state = calibrate(opts, proposer, &mut tracker, &init)?;
    let evaluate_s = tracker.eval_time().as_secs_f64();
    let method = if opts.line_search.max_steps == 1 {
        Method::FullStepOnly
    } else {
        Method::LineSearch
    };
    let config = serde_json::json!({
        "line_search": opts.line_search,
        "proposer": proposer.name(),
    });
    let mut record = RunRecord::from_tracker(method, seed, config, tracker, state.rounds);
    record.proposer_evaluations = proposer.internal_evaluations();
    record.proposer_failures = state.failures;
    record.aborted = state.aborted;
    record.timing = Some(Timing {
        evaluate_s,
        propose_s: state.propose_time.as_secs_f64(),
        total_s: start.elapsed().as_secs_f64(),
    });
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierShare {
    pub multiplier: f64,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptStats {
    pub rounds: usize,
    pub accepted: usize,
    /// `None` when there were no rounds.
    pub accept_rate: Option<f64>,
    /// Accepted multipliers, largest first.
    pub histogram: Vec<MultiplierShare>,
    /// Loop evaluations (initialization excluded) per accepted round.
    pub evals_per_accepted: Option<f64>,
}

pub fn accept_stats(record: &RunRecord) -> AcceptStats {
    let rounds = record.rounds.len();
    let accepted: Vec<f64> = record.rounds.iter().filter_map(|r| r.accepted_multiplier).collect();
    let mut histogram: Vec<MultiplierShare> = Vec::new();
    for &m in &accepted {
        match histogram.iter_mut().find(|s| s.multiplier == m) {
            Some(s) => s.count += 1,
            None => histogram.push(MultiplierShare {
                multiplier: m,
                count: 1,
                fraction: 0.0,
            }),
        }
    }
    for s in &mut histogram {
        s.fraction = s.count as f64 / accepted.len() as f64;
    }
    histogram.sort_by(|a, b| b.multiplier.total_cmp(&a.multiplier));
    let loop_evals: usize = record.rounds.iter().map(|r| r.evaluations).sum();
    AcceptStats {
        rounds,
        accepted: accepted.len(),
        accept_rate: (rounds > 0).then(|| accepted.len() as f64 / rounds as f64),
        histogram,
        evals_per_accepted: (!accepted.is_empty()).then(|| loop_evals as f64 / accepted.len() as f64),
    }
}

#[cfg(test)]
mod tests;
