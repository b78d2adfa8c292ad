use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::objective::{FnEvaluator, ReferenceSet, SwimObjective, DEFAULT_FREQUENCIES};
use crate::params::ParamBounds;
use crate::proposer::{GroundTruthOracle, ReplayProposer};
use crate::swimsim::{SimConfig, SwimmerModel};

fn sphere(dim: usize, center: f64) -> FnEvaluator<impl Fn(&[f64]) -> f64 + Sync> {
    FnEvaluator::new(ParamBounds::unit_box(dim), move |x: &[f64]| {
        x.iter().map(|v| (v - center).powi(2)).sum()
    })
}

/// Proposes uniform points from a box twice the size of the bounds.
struct Wild {
    rng: ChaCha8Rng,
}

impl Proposer for Wild {
    fn name(&self) -> &str {
        "wild"
    }
    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
        let theta = ctx
            .bounds
            .dims()
            .iter()
            .map(|d| d.lower - 0.5 * d.width() + 2.0 * d.width() * self.rng.random::<f64>())
            .collect::<Vec<_>>();
        Ok(Proposal {
            theta: ParamVector(theta),
            rationale: String::new(),
            proposer: "wild".into(),
        })
    }
}

struct Fixed(ParamVector);

impl Proposer for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }
    fn propose(&mut self, _: &ProposerContext) -> Result<Proposal, ProposerError> {
        Ok(Proposal {
            theta: self.0.clone(),
            rationale: String::new(),
            proposer: "fixed".into(),
        })
    }
}

/// Fails on rounds where `fail(call index)` holds.
struct Flaky<F: Fn(usize) -> bool> {
    calls: usize,
    fail: F,
}

impl<F: Fn(usize) -> bool> Proposer for Flaky<F> {
    fn name(&self) -> &str {
        "flaky"
    }
    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
        self.calls += 1;
        if (self.fail)(self.calls - 1) {
            return Err(ProposerError::Timeout { attempts: 3 });
        }
        Ok(Proposal {
            theta: ctx.bounds.midpoint(),
            rationale: String::new(),
            proposer: "flaky".into(),
        })
    }
}

#[test]
fn multipliers_follow_geometric_decay() {
    let f = sphere(2, 0.5);
    let mut tracker = EvalTracker::new(&f, 10);
    let best = ParamVector(vec![0.5, 0.5]);
    tracker.evaluate(&best).unwrap();
    let (trials, acc) = backtrack(&best, 0.0, &ParamVector(vec![0.2, 0.0]), &LineSearchConfig::default(), &mut tracker).unwrap();
    let ms: Vec<f64> = trials.iter().map(|t| t.multiplier).collect();
    assert_eq!(ms, vec![1.0, 0.5, 0.25]);
    assert!(acc.is_none());
    assert_eq!(tracker.used(), 4);
}

#[test]
fn zero_direction_costs_one_evaluation() {
    let f = sphere(2, 0.5);
    let mut tracker = EvalTracker::new(&f, 10);
    let best = ParamVector(vec![0.1, 0.1]);
    let l = tracker.evaluate(&best).unwrap().loss;
    let (trials, acc) = backtrack(&best, l, &ParamVector::zeros(2), &LineSearchConfig::default(), &mut tracker).unwrap();
    assert_eq!(trials.len(), 1);
    assert!(acc.is_none());
}

#[test]
fn budget_caps_the_line_search() {
    let f = sphere(2, 0.5);
    let mut tracker = EvalTracker::new(&f, 3);
    let best = ParamVector(vec![0.5, 0.5]);
    tracker.evaluate(&best).unwrap();
    let (trials, _) = backtrack(&best, 0.0, &ParamVector(vec![0.3, 0.1]), &LineSearchConfig::default(), &mut tracker).unwrap();
    assert_eq!(trials.len(), 2);
    assert_eq!(tracker.remaining(), 0);
    assert!(matches!(
        backtrack(&best, 0.0, &ParamVector(vec![0.3, 0.1]), &LineSearchConfig::default(), &mut tracker),
        Err(CalibError::BudgetExhausted)
    ));
}

#[test]
fn accepts_first_strict_improvement() {
    let f = sphere(1, 0.3);
    let mut tracker = EvalTracker::new(&f, 10);
    let best = ParamVector(vec![0.0]);
    let l = tracker.evaluate(&best).unwrap().loss;
    // full step lands at 1.0 (worse), half step at 0.5 (better)
    let (trials, acc) = backtrack(&best, l, &ParamVector(vec![1.0]), &LineSearchConfig::default(), &mut tracker).unwrap();
    assert_eq!(trials.len(), 2);
    let (m, theta, _) = acc.unwrap();
    assert_eq!(m, 0.5);
    assert_eq!(theta.0, vec![0.5]);
}

#[test]
fn candidates_are_clipped() {
    let f = sphere(1, 0.9);
    let mut tracker = EvalTracker::new(&f, 10);
    let best = ParamVector(vec![0.5]);
    let l = tracker.evaluate(&best).unwrap().loss;
    let (_, acc) = backtrack(&best, l, &ParamVector(vec![4.0]), &LineSearchConfig::default(), &mut tracker).unwrap();
    assert!(acc.is_none() || acc.unwrap().1 .0[0] <= 1.0);
    assert!(tracker.log().iter().all(|e| (0.0..=1.0).contains(&e.theta.0[0])));
}

#[test]
fn config_validation() {
    assert!(LineSearchConfig { decay: 1.0, max_steps: 3 }.validate().is_err());
    assert!(LineSearchConfig { decay: 0.0, max_steps: 3 }.validate().is_err());
    assert!(LineSearchConfig { decay: 0.5, max_steps: 0 }.validate().is_err());
    let c: LineSearchConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(c, LineSearchConfig::default());
}

#[test]
fn budget_of_one_returns_the_initial_point() {
    let f = sphere(3, 0.5);
    let mut p = Fixed(ParamVector(vec![0.5; 3]));
    let r = run_calibration(&CalibOptions::default(), &mut p, &f, 1, 7).unwrap();
    assert!(r.rounds.is_empty());
    assert_eq!(r.evaluations.len(), 1);
    assert_eq!(r.theta_best, f.bounds().random_init(7));
    assert_eq!(r.accept.as_ref().unwrap().accept_rate, None);
    r.check_invariants().unwrap();
}

#[test]
fn full_step_only_spends_one_evaluation_per_round() {
    let f = sphere(4, 0.2);
    let mut p = Wild {
        rng: ChaCha8Rng::seed_from_u64(1),
    };
    let opts = CalibOptions {
        line_search: LineSearchConfig::full_step_only(),
        max_rounds: None,
    };
    let r = run_calibration(&opts, &mut p, &f, 25, 3).unwrap();
    assert_eq!(r.method, Method::FullStepOnly);
    assert_eq!(r.rounds.len(), 24);
    assert!(r.rounds.iter().all(|o| o.evaluations == 1));
}

#[test]
fn failures_do_not_consume_budget() {
    let f = sphere(2, 0.5);
    let mut p = Flaky {
        calls: 0,
        fail: |i| i % 2 == 0,
    };
    let r = run_calibration(&CalibOptions::default(), &mut p, &f, 12, 0).unwrap();
    assert!(r.aborted.is_none());
    assert_eq!(r.evaluations.len(), 12);
    assert!(r.proposer_failures > 0);
    r.check_invariants().unwrap();
}

#[test]
fn five_consecutive_failures_abort() {
    let f = sphere(2, 0.5);
    let mut p = Flaky {
        calls: 0,
        fail: |i| i >= 2,
    };
    let r = run_calibration(&CalibOptions::default(), &mut p, &f, 40, 0).unwrap();
    assert!(r.aborted.as_deref().unwrap().contains("consecutive"));
    assert_eq!(r.rounds.len(), 2);
    assert_eq!(r.proposer_failures, 5);
    assert!(r.evaluations.len() < 40);
    r.check_invariants().unwrap();
}

#[test]
fn wrong_sized_proposal_counts_as_failure() {
    let f = sphere(2, 0.5);
    let mut p = Fixed(ParamVector(vec![0.5; 3]));
    let r = run_calibration(&CalibOptions::default(), &mut p, &f, 10, 0).unwrap();
    assert!(r.aborted.is_some());
    assert_eq!(r.evaluations.len(), 1);
}

#[test]
fn replay_reproduces_the_run() {
    let f = sphere(5, 0.35);
    let mut p = Wild {
        rng: ChaCha8Rng::seed_from_u64(11),
    };
    let r = run_calibration(&CalibOptions::default(), &mut p, &f, 30, 2).unwrap();
    let mut replay = ReplayProposer::new(r.rounds.iter().map(|o| o.proposal.clone()).collect());
    let again = run_calibration(&CalibOptions::default(), &mut replay, &f, 30, 2).unwrap();
    assert_eq!(again.rounds, r.rounds);
    assert_eq!(again.evaluations, r.evaluations);
    assert_eq!(again.best_curve, r.best_curve);
}

#[test]
fn deterministic_apart_from_timing() {
    let f = sphere(3, 0.6);
    let run = || {
        let mut p = Wild {
            rng: ChaCha8Rng::seed_from_u64(5),
        };
        run_calibration(&CalibOptions::default(), &mut p, &f, 20, 9).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.without_timing(), b.without_timing());
    assert_eq!(
        serde_json::to_string(&a.without_timing()).unwrap(),
        serde_json::to_string(&b.without_timing()).unwrap()
    );
}

#[test]
fn record_round_trips_through_json_and_csv() {
    let f = FnEvaluator::new(ParamBounds::unit_box(2), |x: &[f64]| if x[0] > 0.8 { f64::INFINITY } else { x[1] });
    let mut p = Wild {
        rng: ChaCha8Rng::seed_from_u64(2),
    };
    let r = run_calibration(&CalibOptions::default(), &mut p, &f, 15, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    r.write_json(&path).unwrap();
    assert_eq!(RunRecord::read_json(&path).unwrap(), r);
    let parsed = parse_curve_csv(&r.curve_csv()).unwrap();
    assert_eq!(parsed.len(), 15);
    for (a, b) in parsed.iter().zip(&r.best_curve) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300) || a == b);
    }
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["method"], "swim2real");
    assert_eq!(json["schema"], RUN_RECORD_SCHEMA);
}

fn synthetic_record(rounds: usize, accepted: &[Option<f64>]) -> RunRecord {
    let f = sphere(1, 0.5);
    let mut tracker = EvalTracker::new(&f, 1);
    tracker.evaluate(&ParamVector(vec![0.1])).unwrap();
    let outcomes = (0..rounds)
        .map(|i| {
            let m = accepted.get(i).copied().flatten();
            RoundOutcome {
                round: i,
                proposal: Proposal {
                    theta: ParamVector(vec![0.0]),
                    rationale: String::new(),
                    proposer: "x".into(),
                },
                delta: ParamVector(vec![0.0]),
                trials: vec![],
                accepted: m.is_some(),
                accepted_multiplier: m,
                evaluations: 1 + i % 3,
            }
        })
        .collect();
    RunRecord::from_tracker(Method::LineSearch, 0, serde_json::Value::Null, tracker, outcomes)
}

#[test]
fn accept_rate_of_33_in_78() {
    let accepted: Vec<Option<f64>> = (0..78).map(|i| (i < 33).then_some(1.0)).collect();
    let s = accept_stats(&synthetic_record(78, &accepted));
    assert_eq!(s.rounds, 78);
    assert_eq!(s.accepted, 33);
    assert_eq!((s.accept_rate.unwrap() * 1000.0).round() / 1000.0, 0.423);
}

#[test]
fn all_rejected_rounds() {
    let s = accept_stats(&synthetic_record(5, &[]));
    assert_eq!(s.accept_rate, Some(0.0));
    assert!(s.histogram.is_empty());
    assert_eq!(s.evals_per_accepted, None);
}

#[test]
fn histogram_of_three_multipliers() {
    let s = accept_stats(&synthetic_record(3, &[Some(1.0), Some(0.5), Some(0.25)]));
    let ms: Vec<(f64, f64)> = s.histogram.iter().map(|h| (h.multiplier, h.fraction)).collect();
    assert_eq!(ms, vec![(1.0, 1.0 / 3.0), (0.5, 1.0 / 3.0), (0.25, 1.0 / 3.0)]);
    // evaluations 1 + 2 + 3 over 3 accepted
    assert_eq!(s.evals_per_accepted, Some(2.0));
}

#[test]
fn exact_oracle_solves_noise_free_self_calibration() {
    let sim = SimConfig {
        duration: 2.0,
        warmup: 0.5,
        ..SimConfig::default()
    };
    let model = SwimmerModel::default();
    let bounds = ParamBounds::swimmer();
    let star = bounds.midpoint();
    let reference = ReferenceSet::synthetic(&star, &DEFAULT_FREQUENCIES[2..5], 0.0, 0, &sim, &model).unwrap();
    let objective = SwimObjective::new(Arc::new(reference), model);
    let mut oracle = GroundTruthOracle::new(star, bounds, 1.0, 0.0, 0);
    let r = run_calibration(&CalibOptions::default(), &mut oracle, &objective, 8, 0).unwrap();
    assert_eq!(r.evaluations.len(), 8);
    assert!(r.rounds[0].accepted);
    assert_eq!(r.rounds[0].accepted_multiplier, Some(1.0));
    assert!(r.best_curve[1] <= 1e-9, "{}", r.best_curve[1]);
    r.check_invariants().unwrap();
}

#[test]
fn line_search_rescues_overshooting_directions() {
    // Toy counterpart of the overshoot ablation: the exact direction scaled
    // by 3 rarely improves at the full step but often at a shorter one.
    let f = sphere(16, 0.45);
    let bounds = f.bounds().clone();
    let star = ParamVector(vec![0.45; 16]);
    let mut rates = [0.0; 2];
    for (i, k) in [3, 1].into_iter().enumerate() {
        for seed in 0..5 {
            let mut oracle = GroundTruthOracle::new(star.clone(), bounds.clone(), 3.0, 0.0, seed);
            let opts = CalibOptions {
                line_search: LineSearchConfig { decay: 0.5, max_steps: k },
                max_rounds: None,
            };
            let r = run_calibration(&opts, &mut oracle, &f, 40, seed).unwrap();
            rates[i] += r.accept.unwrap().accept_rate.unwrap() / 5.0;
        }
    }
    assert!(rates[0] >= 2.0 * rates[1], "{rates:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loop_invariants_hold(seed in 0u64..1000, budget in 1usize..40, k in 1usize..5, dim in 1usize..6) {
        let f = FnEvaluator::new(ParamBounds::unit_box(dim), |x: &[f64]| {
            if x[0] > 0.95 { f64::INFINITY } else { x.iter().map(|v| (v - 0.3).abs()).sum() }
        });
        let mut p = Wild { rng: ChaCha8Rng::seed_from_u64(seed) };
        let opts = CalibOptions { line_search: LineSearchConfig { decay: 0.5, max_steps: k }, max_rounds: None };
        let r = run_calibration(&opts, &mut p, &f, budget, seed).unwrap();
        prop_assert!(r.check_invariants().is_ok());
        prop_assert_eq!(r.evaluations.len(), budget);
        prop_assert!(r.evaluations.iter().all(|e| f.bounds().contains(&e.theta)));
        let mut incumbent = r.initial_loss;
        for o in &r.rounds {
            prop_assert!(o.evaluations <= k);
            prop_assert_eq!(o.evaluations, o.trials.len());
            if o.accepted {
                let l = o.trials.last().unwrap().loss;
                prop_assert!(l < incumbent);
                incumbent = l;
            } else {
                prop_assert!(o.trials.iter().all(|t| !(t.loss < incumbent)));
            }
        }
        prop_assert_eq!(1 + r.rounds.iter().map(|o| o.evaluations).sum::<usize>(), budget);
    }
}
