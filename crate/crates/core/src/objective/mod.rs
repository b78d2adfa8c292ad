//! The calibration objective: mean body-frame marker error over all
//! actuation frequencies, plus the out-of-objective velocity metrics.

pub mod frame;
pub mod reference;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frame::{forward_velocity, local_frame, marker_error, FrameError, MarkerErrors};
pub use reference::{Provenance, ReferenceError, ReferenceSet, DEFAULT_FREQUENCIES};

use crate::params::{ParamBounds, ParamError, ParamVector};
use crate::swimsim::{simulate, MarkerTrajectory, SimError, SwimmerModel, MARKER_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("candidate rejected: {0}")]
    Params(#[from] ParamError),
    #[error("simulator misconfigured: {0}")]
    Sim(SimError),
    #[error("at {frequency} Hz: {source}")]
    Frame { frequency: f64, source: FrameError },
}

/// Result of one objective evaluation.
///
/// For the swimmer objective `loss` is the mean over frequencies of the mean
/// over markers of `error_matrix`. Generic test objectives leave the
/// diagnostic fields empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frequencies: Vec<f64>,
    /// Rows: frequencies; columns: markers M0..M8. Meters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub error_matrix: Vec<[f64; MARKER_COUNT]>,
    /// Simulated forward velocity per frequency (m/s); `None` if diverged.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sim_velocities: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diverged: Vec<bool>,
    /// Simulations run for this evaluation.
    pub simulations: usize,
}

impl EvalResult {
    /// A bare scalar result, as produced by toy objectives.
    pub fn scalar(loss: f64) -> Self {
        Self {
            loss,
            frequencies: Vec::new(),
            error_matrix: Vec::new(),
            sim_velocities: Vec::new(),
            diverged: Vec::new(),
            simulations: 0,
        }
    }

    pub fn any_diverged(&self) -> bool {
        self.diverged.iter().any(|&d| d)
    }

    /// Frequency with the largest mean marker error.
    pub fn worst_frequency(&self) -> Option<f64> {
        self.error_matrix
            .iter()
            .zip(&self.frequencies)
            .map(|(row, f)| (row.iter().sum::<f64>(), *f))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, f)| f)
    }
}

/// Anything the optimizers can query. Implementations must be pure: the
/// same point yields the same result regardless of call order.
pub trait Evaluator: Sync {
    fn bounds(&self) -> &ParamBounds;

    fn evaluate(&self, theta: &ParamVector) -> Result<EvalResult, EvalError>;

    /// Reference velocities for diagnostics, if the objective has them.
    fn reference_velocities(&self) -> Option<&[f64]> {
        None
    }
}

/// Thread-safe evaluation counter.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicUsize);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }
}

/// The swimmer calibration objective against a reference set.
#[derive(Debug, Clone)]
pub struct SwimObjective {
    reference: Arc<ReferenceSet>,
    model: SwimmerModel,
    bounds: ParamBounds,
}

impl SwimObjective {
    pub fn new(reference: Arc<ReferenceSet>, model: SwimmerModel) -> Self {
        Self {
            reference,
            model,
            bounds: ParamBounds::swimmer(),
        }
    }

    pub fn reference(&self) -> &ReferenceSet {
        &self.reference
    }

    pub fn model(&self) -> &SwimmerModel {
        &self.model
    }
}

impl Evaluator for SwimObjective {
    fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    fn evaluate(&self, theta: &ParamVector) -> Result<EvalResult, EvalError> {
        evaluate_uncounted(theta, &self.reference, &self.model)
    }

    fn reference_velocities(&self) -> Option<&[f64]> {
        Some(&self.reference.velocities)
    }
}

struct FrequencyOutcome {
    errors: [f64; MARKER_COUNT],
    velocity: Option<f64>,
    diverged: bool,
}

fn evaluate_uncounted(theta: &ParamVector, reference: &ReferenceSet, model: &SwimmerModel) -> Result<EvalResult, EvalError> {
    ParamBounds::swimmer().check_feasible(theta)?;
    let outcomes: Vec<Result<FrequencyOutcome, EvalError>> = reference
        .frequencies
        .par_iter()
        .zip(reference.local.par_iter())
        .map(|(&frequency, real)| {
            let traj = match simulate(theta, frequency, &reference.sim, model) {
                Ok(t) => t,
                Err(SimError::Divergence { .. }) => {
                    return Ok(FrequencyOutcome {
                        errors: [f64::INFINITY; MARKER_COUNT],
                        velocity: None,
                        diverged: true,
                    })
                }
                Err(e) => return Err(EvalError::Sim(e)),
            };
            let wrap = |source| EvalError::Frame { frequency, source };
            let local = local_frame(&traj).map_err(wrap)?;
            let errors = marker_error(&local, real).map_err(wrap)?;
            Ok(FrequencyOutcome {
                errors: errors.per_marker,
                velocity: Some(forward_velocity(&traj).map_err(wrap)?),
                diverged: false,
            })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let diverged: Vec<bool> = outcomes.iter().map(|o| o.diverged).collect();
    let loss = if diverged.iter().any(|&d| d) {
        f64::INFINITY
    } else {
        let matrix: Vec<[f64; MARKER_COUNT]> = outcomes.iter().map(|o| o.errors).collect();
        aggregate(&matrix)
    };
    Ok(EvalResult {
        loss,
        frequencies: reference.frequencies.clone(),
        error_matrix: outcomes.iter().map(|o| o.errors).collect(),
        sim_velocities: outcomes.iter().map(|o| o.velocity).collect(),
        diverged,
        simulations: reference.frequencies.len(),
    })
}

fn aggregate(errors: &[[f64; MARKER_COUNT]]) -> f64 {
    let per_freq: f64 = errors.iter().map(|e| e.iter().sum::<f64>() / MARKER_COUNT as f64).sum();
    per_freq / errors.len() as f64
}

/// Loss of body-frame trajectory pairs, one pair per frequency: the mean
/// over frequencies of the mean over markers of the per-marker mean
/// distance.
pub fn trajectory_loss(sim: &[MarkerTrajectory], real: &[MarkerTrajectory]) -> Result<f64, FrameError> {
    assert_eq!(sim.len(), real.len(), "one reference per simulated trajectory");
    let matrix = sim
        .iter()
        .zip(real)
        .map(|(s, r)| marker_error(s, r).map(|e| e.per_marker))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&matrix))
}

/// One charged evaluation of the swimmer objective: simulates every
/// frequency and bumps `counter` by exactly one.
pub fn evaluate(
    theta: &ParamVector,
    reference: &ReferenceSet,
    model: &SwimmerModel,
    counter: &EvalCounter,
) -> Result<EvalResult, EvalError> {
    let r = evaluate_uncounted(theta, reference, model);
    counter.increment();
    r
}

/// Mean absolute forward-velocity error over frequencies, mm/s. `+inf` if
/// any frequency diverged.
pub fn velocity_mae_from(result: &EvalResult, reference_velocities: &[f64]) -> f64 {
    let diffs: Option<Vec<f64>> = result
        .sim_velocities
        .iter()
        .zip(reference_velocities)
        .map(|(s, r)| s.map(|s| (s - r).abs() * 1000.0))
        .collect();
    match diffs {
        Some(d) if !d.is_empty() => d.iter().sum::<f64>() / d.len() as f64,
        _ => f64::INFINITY,
    }
}

pub fn velocity_mae(theta: &ParamVector, reference: &ReferenceSet, model: &SwimmerModel) -> Result<f64, EvalError> {
    let r = evaluate_uncounted(theta, reference, model)?;
    Ok(velocity_mae_from(&r, &reference.velocities))
}

/// Wraps a closure as an [`Evaluator`] over an arbitrary box.
pub struct FnEvaluator<F> {
    bounds: ParamBounds,
    f: F,
}

impl<F> FnEvaluator<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(bounds: ParamBounds, f: F) -> Self {
        Self { bounds, f }
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    fn evaluate(&self, theta: &ParamVector) -> Result<EvalResult, EvalError> {
        self.bounds.check_feasible(theta)?;
        Ok(EvalResult::scalar((self.f)(theta.as_slice())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swimsim::SimConfig;

    fn quick_reference(theta: &ParamVector) -> ReferenceSet {
        let sim = SimConfig {
            duration: 1.5,
            warmup: 0.5,
            ..SimConfig::default()
        };
        ReferenceSet::synthetic(theta, &[0.5, 1.25, 2.0], 0.0, 0, &sim, &SwimmerModel::default()).unwrap()
    }

    #[test]
    fn self_match_is_zero_and_counted() {
        let b = ParamBounds::swimmer();
        let star = b.random_init(100);
        let reference = quick_reference(&star);
        let counter = EvalCounter::new();
        let model = SwimmerModel::default();
        let r = evaluate(&star, &reference, &model, &counter).unwrap();
        assert!(r.loss <= 1e-9, "{}", r.loss);
        assert_eq!(r.simulations, 3);
        let other = b.random_init(101);
        let r2 = evaluate(&other, &reference, &model, &counter).unwrap();
        evaluate(&other, &reference, &model, &counter).unwrap();
        assert_eq!(counter.get(), 3);
        assert!(r2.loss > r.loss);
    }

    #[test]
    fn loss_is_mean_of_error_matrix() {
        let b = ParamBounds::swimmer();
        let reference = quick_reference(&b.midpoint());
        let obj = SwimObjective::new(Arc::new(reference), SwimmerModel::default());
        let r = obj.evaluate(&b.random_init(5)).unwrap();
        if r.loss.is_finite() {
            let flat: Vec<f64> = r.error_matrix.iter().flatten().copied().collect();
            let mean = flat.iter().sum::<f64>() / flat.len() as f64;
            assert!((mean - r.loss).abs() <= 1e-12 * r.loss);
        }
    }

    #[test]
    fn infeasible_candidates_are_rejected() {
        let b = ParamBounds::swimmer();
        let obj = SwimObjective::new(Arc::new(quick_reference(&b.midpoint())), SwimmerModel::default());
        let mut theta = b.midpoint();
        theta.0[0] = -1.0;
        assert!(matches!(obj.evaluate(&theta), Err(EvalError::Params(_))));
    }

    #[test]
    fn velocity_mae_cases() {
        let r = EvalResult {
            sim_velocities: vec![Some(0.010), Some(0.030)],
            ..EvalResult::scalar(0.0)
        };
        // |10 - 14| = 4 mm/s, |30 - 20| = 10 mm/s -> 7 mm/s
        assert!((velocity_mae_from(&r, &[0.014, 0.020]) - 7.0).abs() < 1e-9);
        let d = EvalResult {
            sim_velocities: vec![Some(0.010), None],
            ..EvalResult::scalar(0.0)
        };
        assert_eq!(velocity_mae_from(&d, &[0.0, 0.0]), f64::INFINITY);

        let star = ParamBounds::swimmer().midpoint();
        let reference = quick_reference(&star);
        assert!(velocity_mae(&star, &reference, &SwimmerModel::default()).unwrap() < 1e-6);
    }

    #[test]
    fn worst_frequency_picks_largest_row() {
        let r = EvalResult {
            frequencies: vec![0.5, 1.0],
            error_matrix: vec![[0.1; 9], [0.3; 9]],
            ..EvalResult::scalar(0.2)
        };
        assert_eq!(r.worst_frequency(), Some(1.0));
    }
}
