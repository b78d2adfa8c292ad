use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::CalibError;
use crate::objective::{EvalResult, Evaluator};
use crate::params::{ParamBounds, ParamVector};

/// One charged evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub theta: ParamVector,
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub loss: f64,
}

/// Budget accounting shared by the loop and the baselines.
///
/// Every call to [`EvalTracker::evaluate`] charges exactly one unit of budget,
/// rejects infeasible points and extends the best-so-far curve.
pub struct EvalTracker<'a> {
    evaluator: &'a dyn Evaluator,
    budget: usize,
    log: Vec<Evaluation>,
    curve: Vec<f64>,
    best: Option<(ParamVector, EvalResult)>,
    elapsed: Duration,
}

impl<'a> EvalTracker<'a> {
    pub fn new(evaluator: &'a dyn Evaluator, budget: usize) -> Self {
        Self {
            evaluator,
            budget,
            log: Vec::with_capacity(budget),
            curve: Vec::with_capacity(budget),
            best: None,
            elapsed: Duration::ZERO,
        }
    }

    pub fn bounds(&self) -> &ParamBounds {
        self.evaluator.bounds()
    }

    pub fn evaluator(&self) -> &'a dyn Evaluator {
        self.evaluator
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn used(&self) -> usize {
        self.log.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.log.len()
    }

    pub fn evaluate(&mut self, theta: &ParamVector) -> Result<EvalResult, CalibError> {
        if self.remaining() == 0 {
            return Err(CalibError::BudgetExhausted);
        }
        self.bounds().check_feasible(theta)?;
        let start = Instant::now();
        let result = self.evaluator.evaluate(theta)?;
        self.elapsed += start.elapsed();
        let improved = match &self.best {
            None => true,
            Some((_, b)) => result.loss < b.loss,
        };
        if improved {
            self.best = Some((theta.clone(), result.clone()));
        }
        let prev = self.curve.last().copied().unwrap_or(f64::INFINITY);
        self.curve.push(prev.min(result.loss));
        self.log.push(Evaluation {
            theta: theta.clone(),
            loss: result.loss,
        });
        Ok(result)
    }

    /// Best point seen so far (the first one on ties).
    pub fn best(&self) -> Option<&(ParamVector, EvalResult)> {
        self.best.as_ref()
    }

    pub fn log(&self) -> &[Evaluation] {
        &self.log
    }

    pub fn curve(&self) -> &[f64] {
        &self.curve
    }

    pub fn eval_time(&self) -> Duration {
        self.elapsed
    }

    pub(crate) fn into_parts(self) -> (Vec<Evaluation>, Vec<f64>, Option<(ParamVector, EvalResult)>) {
        (self.log, self.curve, self.best)
    }
}
