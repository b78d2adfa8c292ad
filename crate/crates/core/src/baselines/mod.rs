//! Budget-matched black-box baselines over the same evaluator as the loop.

mod bayesopt;
mod cmaes;
pub mod gp;

use std::time::Instant;

use rand::Rng;

pub use bayesopt::{expected_improvement, run_bayesopt, BayesOptConfig};
pub use cmaes::{run_cmaes, CmaesConfig};

use crate::calib::{CalibError, EvalTracker, Method, RunRecord, Timing};
use crate::objective::Evaluator;
use crate::seeding::{self, Stream};

/// Spends whatever budget `tracker` has left on uniform samples.
pub fn random_fill(tracker: &mut EvalTracker<'_>, seed: u64) -> Result<(), CalibError> {
    let mut rng = seeding::rng(seed, Stream::RandomSearch);
    let bounds = tracker.bounds().clone();
    while tracker.remaining() > 0 {
        let theta = bounds.sample_uniform(&mut rng);
        tracker.evaluate(&theta)?;
    }
    Ok(())
}

/// Uniform random search; the first sample is the seed-matched init.
pub fn run_random(evaluator: &dyn Evaluator, budget: usize, seed: u64) -> Result<RunRecord, CalibError> {
    if budget == 0 {
        return Err(CalibError::Config("budget must be at least 1".into()));
    }
    let start = Instant::now();
    let mut tracker = EvalTracker::new(evaluator, budget);
    tracker.evaluate(&evaluator.bounds().random_init(seed))?;
    random_fill(&mut tracker, seed)?;
    let evaluate_s = tracker.eval_time().as_secs_f64();
    let mut record = RunRecord::from_tracker(Method::Random, seed, serde_json::json!({}), tracker, Vec::new());
    record.timing = Some(Timing {
        evaluate_s,
        propose_s: 0.0,
        total_s: start.elapsed().as_secs_f64(),
    });
    Ok(record)
}

pub(crate) fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}
