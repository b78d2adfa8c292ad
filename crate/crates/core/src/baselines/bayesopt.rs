use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gp::{fit_hyperparameters, GpModel};
use crate::calib::{CalibError, EvalTracker, Method, RunRecord, Timing};
use crate::objective::Evaluator;
use crate::params::ParamVector;
use crate::seeding::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesOptConfig {
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Exploration offset of expected improvement, in standardized units.
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Seeded points before the surrogate takes over, the init included.
    #[serde(default = "default_initial_design")]
    pub initial_design: usize,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_refine_starts")]
    pub refine_starts: usize,
    #[serde(default = "default_hyper_starts")]
    pub hyper_starts: usize,
    #[serde(default = "default_hyper_sweeps")]
    pub hyper_sweeps: usize,
}

fn default_jitter() -> f64 {
    1e-8
}
fn default_xi() -> f64 {
    0.01
}
fn default_initial_design() -> usize {
    5
}
fn default_candidates() -> usize {
    1024
}
fn default_refine_starts() -> usize {
    4
}
fn default_hyper_starts() -> usize {
    3
}
fn default_hyper_sweeps() -> usize {
    50
}

impl Default for BayesOptConfig {
    fn default() -> Self {
        Self {
            jitter: default_jitter(),
            xi: default_xi(),
            initial_design: default_initial_design(),
            candidates: default_candidates(),
            refine_starts: default_refine_starts(),
            hyper_starts: default_hyper_starts(),
            hyper_sweeps: default_hyper_sweeps(),
        }
    }
}

impl BayesOptConfig {
    pub fn validate(&self, budget: usize) -> Result<(), CalibError> {
        if !(self.jitter > 0.0) {
            return Err(CalibError::Config("jitter must be positive".into()));
        }
        if self.initial_design == 0 || self.candidates == 0 {
            return Err(CalibError::Config("initial design and candidate count must be positive".into()));
        }
        if budget <= self.initial_design {
            return Err(CalibError::Config(format!(
                "budget {budget} must exceed the initial design size {}",
                self.initial_design
            )));
        }
        Ok(())
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for minimization.
pub fn expected_improvement(mean: f64, var: f64, best: f64, xi: f64) -> f64 {
    let improvement = best - mean - xi;
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / sd;
    (improvement * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// Maps losses to GP targets: infinite losses become the worst finite one
/// plus three standard deviations, then everything is standardized with the
/// finite losses' mean and deviation.
pub fn prepare_targets(losses: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = losses.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return vec![0.0; losses.len()];
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let std = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let worst = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let penalty = worst + 3.0 * std;
    let filled = losses.iter().map(|&v| if v.is_finite() { v } else { penalty });
    if finite.len() < 2 || std == 0.0 {
        return filled.map(|v| v - mean).collect();
    }
    filled.map(|v| (v - mean) / std).collect()
}

fn refine(model: &GpModel, start: &[f64], best: f64, xi: f64) -> (f64, Vec<f64>) {
    let ei = |p: &[f64]| {
        let (m, v) = model.predict(p);
        expected_improvement(m, v, best, xi)
    };
    let mut x = start.to_vec();
    let mut value = ei(&x);
    let mut step = 0.1;
    while step >= 0.1 / 32.0 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (cand[i] + dir * step).clamp(0.0, 1.0);
                let v = ei(&cand);
                if v > value {
                    x = cand;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (value, x)
}

/// GP-EI Bayesian optimization in the normalized box.
pub fn run_bayesopt(cfg: &BayesOptConfig, evaluator: &dyn Evaluator, budget: usize, seed: u64) -> Result<RunRecord, CalibError> {
    cfg.validate(budget)?;
    let start = Instant::now();
    let bounds = evaluator.bounds().clone();
    let d = bounds.dim();
    let mut rng = seeding::rng(seed, Stream::BayesOpt);
    let mut tracker = EvalTracker::new(evaluator, budget);
    let mut events = Vec::new();

    tracker.evaluate(&bounds.random_init(seed))?;
    while tracker.used() < cfg.initial_design {
        let theta = bounds.sample_uniform(&mut rng);
        tracker.evaluate(&theta)?;
    }

    let mut surrogate_s = 0.0;
    let mut iteration = 0u64;
    while tracker.remaining() > 0 {
        let t0 = Instant::now();
        let x: Vec<Vec<f64>> = tracker
            .log()
            .iter()
            .map(|e| bounds.normalize_unchecked(&e.theta).0)
            .collect();
        let losses: Vec<f64> = tracker.log().iter().map(|e| e.loss).collect();
        let y = prepare_targets(&losses);
        let mut hyper_rng = seeding::rng_indexed(seed, Stream::GpHyper, iteration);
        let fit = fit_hyperparameters(&x, &y, cfg.jitter, cfg.hyper_starts, cfg.hyper_sweeps, &mut hyper_rng)
            .map_err(|e| CalibError::Surrogate(e.to_string()))?;
        let model = GpModel::fit(&x, &y, &fit.params).map_err(|e| CalibError::Surrogate(e.to_string()))?;
        if model.jitter_used() > cfg.jitter {
            events.push(format!(
                "iteration {iteration}: jitter raised to {:e}",
                model.jitter_used()
            ));
        }
        let best = y.iter().copied().fold(f64::INFINITY, f64::min);

        let mut scored: Vec<(f64, Vec<f64>)> = (0..cfg.candidates)
            .map(|_| {
                let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let (m, v) = model.predict(&p);
                (expected_improvement(m, v, best, cfg.xi), p)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let chosen = scored
            .iter()
            .take(cfg.refine_starts.max(1))
            .map(|(_, p)| refine(&model, p, best, cfg.xi))
            .fold(None::<(f64, Vec<f64>)>, |acc, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            })
            .map(|(_, p)| p)
            .expect("at least one candidate");
        surrogate_s += t0.elapsed().as_secs_f64();

        let theta = bounds.clip(&bounds.denormalize(&ParamVector(chosen)))?;
        tracker.evaluate(&theta)?;
        iteration += 1;
    }

    let evaluate_s = tracker.eval_time().as_secs_f64();
    let mut config = serde_json::to_value(cfg).expect("config serializes");
    config["kernel"] = "matern52_ard".into();
    config["acquisition"] = "expected_improvement".into();
    let mut record = RunRecord::from_tracker(Method::BayesOpt, seed, config, tracker, Vec::new());
    record.events = events;
    record.timing = Some(Timing {
        evaluate_s,
        propose_s: surrogate_s,
        total_s: start.elapsed().as_secs_f64(),
    });
    Ok(record)
}
