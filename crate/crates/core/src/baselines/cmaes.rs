use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::standard_normal_vec;
use crate::calib::{CalibError, EvalTracker, Method, RunRecord, Timing};
use crate::objective::Evaluator;
use crate::params::ParamVector;
use crate::seeding::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaesConfig {
    /// Defaults to `4 + floor(3 ln d)`.
    #[serde(default)]
    pub population: Option<usize>,
    /// Initial step size in normalized coordinates.
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
}

fn default_sigma0() -> f64 {
    0.2
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self {
            population: None,
            sigma0: default_sigma0(),
        }
    }
}

impl CmaesConfig {
    pub fn lambda(&self, dim: usize) -> usize {
        self.population
            .unwrap_or(4 + (3.0 * (dim as f64).ln()).floor() as usize)
    }

    pub fn validate(&self, dim: usize) -> Result<(), CalibError> {
        if self.lambda(dim) < 4 {
            return Err(CalibError::Config("population must be at least 4".into()));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(CalibError::Config("sigma0 must be positive".into()));
        }
        Ok(())
    }
}

/// Strategy constants, fixed by dimension and population size.
struct Strategy {
    n: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self {
            n,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Symmetric square root and inverse square root of `c`, or `None` if `c`
/// is not numerically positive definite.
fn sqrt_factors(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min.is_finite() && max.is_finite()) || min <= 0.0 || max / min > 1e14 {
        return None;
    }
    let d = eig.eigenvalues.map(f64::sqrt);
    let b = &eig.eigenvectors;
    let half = b * DMatrix::from_diagonal(&d) * b.transpose();
    let inv_half = b * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * b.transpose();
    Some((half, inv_half))
}

/// CMA-ES in the unit box starting at normalized mean `u0`. `draw` fills a
/// standard-normal vector; tests substitute it to check relabeling
/// invariance. Returns the recovery events.
pub(crate) fn cmaes_on_tracker(
    cfg: &CmaesConfig,
    tracker: &mut EvalTracker<'_>,
    u0: &[f64],
    draw: &mut dyn FnMut(usize) -> Vec<f64>,
) -> Result<Vec<String>, CalibError> {
    let bounds = tracker.bounds().clone();
    let n = bounds.dim();
    cfg.validate(n)?;
    let lambda = cfg.lambda(n);
    let s = Strategy::new(n, lambda);
    let mut mean = DVector::from_column_slice(u0);
    let mut sigma = cfg.sigma0;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);
    let mut events = Vec::new();
    let mut generation = 0usize;

    while tracker.remaining() > 0 {
        let (half, inv_half) = match sqrt_factors(&c) {
            Some(f) => f,
            None => {
                events.push(format!("generation {generation}: covariance degenerate, reset to identity"));
                c = DMatrix::identity(n, n);
                p_c.fill(0.0);
                p_sigma.fill(0.0);
                (DMatrix::identity(n, n), DMatrix::identity(n, n))
            }
        };
        let count = lambda.min(tracker.remaining());
        let mut population: Vec<(f64, DVector<f64>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let z = DVector::from_vec(draw(n));
            let x = &mean + sigma * (&half * z);
            // Clip-repair: the clipped point is both evaluated and fed back.
            let clipped = x.map(|v| v.clamp(0.0, 1.0));
            let theta = bounds.denormalize(&ParamVector(clipped.iter().copied().collect()));
            let theta = bounds.clip(&theta)?;
            let loss = tracker.evaluate(&theta)?.loss;
            population.push((loss, (&clipped - &mean) / sigma));
        }
        if count < lambda {
            // Partial generation: best-tracking only.
            break;
        }
        population.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut y_w = DVector::<f64>::zeros(n);
        for (w, (_, y)) in s.weights.iter().zip(&population) {
            y_w += *w * y;
        }
        mean += sigma * &y_w;

        let cs = s.c_sigma;
        p_sigma = (1.0 - cs) * &p_sigma + (cs * (2.0 - cs) * s.mu_eff).sqrt() * (&inv_half * &y_w);
        let ps_norm = p_sigma.norm();
        let decay = 1.0 - (1.0 - cs).powi(2 * (generation as i32 + 1));
        let h_sigma = if ps_norm / decay.sqrt() < (1.4 + 2.0 / (s.n as f64 + 1.0)) * s.chi_n {
            1.0
        } else {
            0.0
        };
        p_c = (1.0 - s.c_c) * &p_c + h_sigma * (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, (_, y)) in s.weights.iter().zip(population.iter().take(s.mu)) {
            rank_mu += *w * y * y.transpose();
        }
        let old_weight = 1.0 - s.c_1 - s.c_mu + (1.0 - h_sigma) * s.c_1 * s.c_c * (2.0 - s.c_c);
        c = old_weight * &c + s.c_1 * &p_c * p_c.transpose() + s.c_mu * rank_mu;
        c = 0.5 * (&c + c.transpose());

        sigma *= ((cs / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
        if !(sigma.is_finite() && sigma > 0.0) || mean.iter().any(|v| !v.is_finite()) {
            events.push(format!("generation {generation}: step size degenerate, reset"));
            sigma = cfg.sigma0;
            mean = mean.map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.5 });
        }
        generation += 1;
    }
    Ok(events)
}

/// CMA-ES centered on the seed-matched init. The initial mean is not itself
/// evaluated; every evaluation is a sampled candidate.
pub fn run_cmaes(cfg: &CmaesConfig, evaluator: &dyn Evaluator, budget: usize, seed: u64) -> Result<RunRecord, CalibError> {
    if budget == 0 {
        return Err(CalibError::Config("budget must be at least 1".into()));
    }
    let start = Instant::now();
    let bounds = evaluator.bounds();
    let u0 = bounds.normalize(&bounds.random_init(seed))?;
    let mut rng = seeding::rng(seed, Stream::Cmaes);
    let mut tracker = EvalTracker::new(evaluator, budget);
    let events = cmaes_on_tracker(cfg, &mut tracker, u0.as_slice(), &mut |n| standard_normal_vec(&mut rng, n))?;
    let evaluate_s = tracker.eval_time().as_secs_f64();
    let config = serde_json::json!({
        "population": cfg.lambda(bounds.dim()),
        "sigma0": cfg.sigma0,
    });
    let mut record = RunRecord::from_tracker(Method::Cmaes, seed, config, tracker, Vec::new());
    record.events = events;
    record.timing = Some(Timing {
        evaluate_s,
        propose_s: 0.0,
        total_s: start.elapsed().as_secs_f64(),
    });
    Ok(record)
}
