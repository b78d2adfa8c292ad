use rand::Rng;

use super::{Proposal, Proposer, ProposerContext, ProposerError};
use crate::objective::{EvalCounter, Evaluator};
use crate::params::ParamVector;
use crate::seeding::{self, Stream};

/// Simultaneous-perturbation proposer.
///
/// Probes `u_best +- c * delta` (normalized, clipped to the unit box) with a
/// random sign vector `delta`, then proposes
/// `u_best - gamma * c * rho * delta` with the relative slope
/// `rho = (L+ - L-) / max(L+, L-)` in `[-1, 1]`. The two probe evaluations
/// go to this proposer's own counter, never to the calibration budget.
pub struct SpsaOracle<'a> {
    evaluator: &'a dyn Evaluator,
    perturbation: f64,
    gamma: f64,
    seed: u64,
    counter: EvalCounter,
}

impl<'a> SpsaOracle<'a> {
    pub fn new(evaluator: &'a dyn Evaluator, perturbation: f64, gamma: f64, seed: u64) -> Self {
        assert!(perturbation > 0.0, "perturbation must be positive");
        Self {
            evaluator,
            perturbation,
            gamma,
            seed,
            counter: EvalCounter::new(),
        }
    }

    fn probe(&self, u: &[f64]) -> f64 {
        let bounds = self.evaluator.bounds();
        let theta = bounds.denormalize(&ParamVector(u.iter().map(|v| v.clamp(0.0, 1.0)).collect()));
        self.counter.increment();
        // Infeasible after rounding means a corrupt bound; treat as diverged.
        match bounds.clip(&theta).map(|t| self.evaluator.evaluate(&t)) {
            Ok(Ok(r)) => r.loss,
            _ => f64::INFINITY,
        }
    }
}

impl Proposer for SpsaOracle<'_> {
    fn name(&self) -> &str {
        "spsa_oracle"
    }

    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
        let bounds = self.evaluator.bounds();
        let u = bounds.normalize_unchecked(&ctx.theta_best);
        let mut rng = seeding::rng_indexed(self.seed, Stream::Spsa, ctx.round as u64);
        let delta: Vec<f64> = (0..u.len())
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let c = self.perturbation;
        let plus: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + c * d).collect();
        let minus: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x - c * d).collect();
        let (lp, lm) = (self.probe(&plus), self.probe(&minus));

        let rho = match (lp.is_finite(), lm.is_finite()) {
            (false, false) => {
                return Ok(Proposal {
                    theta: ctx.theta_best.clone(),
                    rationale: "probes diverged".into(),
                    proposer: self.name().into(),
                })
            }
            (false, true) => 1.0,
            (true, false) => -1.0,
            (true, true) => {
                let scale = lp.abs().max(lm.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (lp - lm) / scale
                }
            }
        };
        let step = self.gamma * c * rho;
        let proposed = ParamVector(u.iter().zip(&delta).map(|(x, d)| x - step * d).collect());
        Ok(Proposal {
            theta: bounds.denormalize(&proposed),
            rationale: format!("probe losses +{lp:.6e} / -{lm:.6e}, relative slope {rho:.4}"),
            proposer: self.name().into(),
        })
    }

    fn internal_evaluations(&self) -> usize {
        self.counter.get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{EvalResult, FnEvaluator};
    use crate::params::ParamBounds;

    fn ctx(theta_best: ParamVector, round: usize, bounds: &ParamBounds) -> ProposerContext {
        ProposerContext::new(round, 10, theta_best, &EvalResult::scalar(1.0), bounds.clone(), vec![], vec![])
    }

    #[test]
    fn symmetric_objective_gives_zero_step() {
        let b = ParamBounds::unit_box(4);
        let f = FnEvaluator::new(b.clone(), |x: &[f64]| x.iter().map(|v| (v - 0.5).powi(2)).sum());
        let mut o = SpsaOracle::new(&f, 0.05, 1.0, 0);
        let center = ParamVector(vec![0.5; 4]);
        let p = o.propose(&ctx(center.clone(), 0, &b)).unwrap();
        assert!(p.theta.sub(&center).norm() < 1e-12);
    }

    #[test]
    fn counts_two_internal_evaluations_per_call() {
        let b = ParamBounds::unit_box(3);
        let f = FnEvaluator::new(b.clone(), |x: &[f64]| x[0]);
        let mut o = SpsaOracle::new(&f, 0.05, 1.0, 0);
        for round in 0..4 {
            o.propose(&ctx(ParamVector(vec![0.3; 3]), round, &b)).unwrap();
            assert_eq!(o.internal_evaluations(), 2 * (round + 1));
        }
    }

    #[test]
    fn descends_on_separable_quadratic() {
        // Monte-Carlo check against the analytic gradient.
        let b = ParamBounds::unit_box(16);
        let weights: Vec<f64> = (0..16).map(|i| 1.0 + i as f64 * 0.3).collect();
        let w = weights.clone();
        let f = FnEvaluator::new(b.clone(), move |x: &[f64]| {
            x.iter().zip(&w).map(|(v, wi)| wi * (v - 0.4).powi(2)).sum()
        });
        let mut good = 0;
        for trial in 0..100u64 {
            let start = b.random_init(trial);
            let start = ParamVector(start.iter().map(|v| 0.1 + 0.8 * v).collect());
            let mut o = SpsaOracle::new(&f, 0.01, 1.0, trial);
            let p = o.propose(&ctx(start.clone(), 0, &b)).unwrap();
            let step = p.theta.sub(&start);
            let neg_grad: Vec<f64> = start.iter().zip(&weights).map(|(v, wi)| -2.0 * wi * (v - 0.4)).collect();
            let dot: f64 = step.iter().zip(&neg_grad).map(|(a, b)| a * b).sum();
            if dot > 0.0 {
                good += 1;
            }
        }
        assert!(good >= 90, "{good}/100");
    }

    #[test]
    fn both_probes_diverging_gives_zero_step() {
        let b = ParamBounds::unit_box(2);
        let f = FnEvaluator::new(b.clone(), |_: &[f64]| f64::INFINITY);
        let mut o = SpsaOracle::new(&f, 0.1, 1.0, 0);
        let start = ParamVector(vec![0.2, 0.7]);
        let p = o.propose(&ctx(start.clone(), 0, &b)).unwrap();
        assert_eq!(p.theta, start);
        assert_eq!(p.rationale, "probes diverged");
    }
}
