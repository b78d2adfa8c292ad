//! Exact Gaussian-process regression with a Matérn 5/2 ARD kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Jitter escalates by 10x per failed factorization up to this value.
pub const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("no training data")]
    Empty,
    #[error("kernel parameters must be positive and finite")]
    BadParams,
    #[error("kernel matrix not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scales: Vec<f64>,
    /// Signal variance `sigma_f^2`.
    pub signal_var: f64,
    /// Initial diagonal jitter.
    pub jitter: f64,
}

impl KernelParams {
    pub fn isotropic(dim: usize, length: f64, signal_var: f64, jitter: f64) -> Self {
        Self {
            length_scales: vec![length; dim],
            signal_var,
            jitter,
        }
    }

    fn validate(&self) -> Result<(), GpError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if self.length_scales.iter().all(|&l| ok(l)) && ok(self.signal_var) && ok(self.jitter) {
            Ok(())
        } else {
            Err(GpError::BadParams)
        }
    }
}

pub fn matern52(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&p.length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let s5r = (5.0 * r2).sqrt();
    p.signal_var * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
}

#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y: DVector<f64>,
    jitter_used: f64,
}

impl GpModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &KernelParams) -> Result<GpModel, GpError> {
        params.validate()?;
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(GpError::Empty);
        }
        let d = params.length_scales.len();
        if let Some(bad) = x.iter().find(|p| p.len() != d) {
            return Err(GpError::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        let k = DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], params));
        let mut jitter = params.jitter;
        let chol = loop {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
            if let Some(c) = kj.cholesky() {
                break c;
            }
            if jitter >= MAX_JITTER {
                return Err(GpError::NotPositiveDefinite(jitter));
            }
            jitter = (jitter * 10.0).min(MAX_JITTER);
        };
        let y = DVector::from_column_slice(y);
        let alpha = chol.solve(&y);
        Ok(GpModel {
            x: x.to_vec(),
            params: params.clone(),
            chol,
            alpha,
            y,
            jitter_used: jitter,
        })
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Posterior mean and variance (clamped at 0) at `q`.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let kq = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(xi, q, &self.params)));
        let mean = kq.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&kq).expect("triangular factor is invertible");
        let var = (self.params.signal_var - v.norm_squared()).max(0.0);
        (mean, var)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let log_det: f64 = self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        -0.5 * self.y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Posterior mean and variance at a single query point.
pub fn gp_posterior(x: &[Vec<f64>], y: &[f64], query: &[f64], params: &KernelParams) -> Result<(f64, f64), GpError> {
    Ok(GpModel::fit(x, y, params)?.predict(query))
}

/// Box for hyperparameters during fitting, in natural-log space.
const LOG_LENGTH: (f64, f64) = (-2.0 * std::f64::consts::LN_10, std::f64::consts::LN_10); // [0.01, 10]
const LOG_SIGNAL: (f64, f64) = (-2.0 * std::f64::consts::LN_10, 2.0 * std::f64::consts::LN_10); // [0.01, 100]

#[derive(Debug, Clone)]
pub struct HyperFit {
    pub params: KernelParams,
    pub log_likelihood: f64,
    /// Log marginal likelihood after every accepted step, per start.
    pub traces: Vec<Vec<f64>>,
}

/// Maximizes the log marginal likelihood over log length-scales and log
/// signal variance by coordinate ascent with step halving, from a default
/// start plus `starts - 1` random ones.
pub fn fit_hyperparameters<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    jitter: f64,
    starts: usize,
    max_sweeps: usize,
    rng: &mut R,
) -> Result<HyperFit, GpError> {
    let d = x.first().ok_or(GpError::Empty)?.len();
    let lml = |theta: &[f64]| -> Option<f64> {
        let p = KernelParams {
            length_scales: theta[..d].iter().map(|v| v.exp()).collect(),
            signal_var: theta[d].exp(),
            jitter,
        };
        GpModel::fit(x, y, &p).ok().map(|m| m.log_marginal_likelihood()).filter(|v| v.is_finite())
    };
    let range = |i: usize| if i < d { LOG_LENGTH } else { LOG_SIGNAL };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut traces = Vec::new();
    for s in 0..starts.max(1) {
        let mut theta: Vec<f64> = if s == 0 {
            let mut t = vec![0.5f64.ln(); d];
            t.push(0.0);
            t
        } else {
            (0..=d).map(|i| rng.random_range(range(i).0..range(i).1)).collect()
        };
        let Some(mut current) = lml(&theta) else { continue };
        let mut trace = vec![current];
        let mut step = 1.0;
        for _ in 0..max_sweeps {
            let mut improved = false;
            for i in 0..=d {
                for dir in [1.0, -1.0] {
                    let mut cand = theta.clone();
                    cand[i] = (cand[i] + dir * step).clamp(range(i).0, range(i).1);
                    if cand[i] == theta[i] {
                        continue;
                    }
                    if let Some(v) = lml(&cand) {
                        if v > current {
                            theta = cand;
                            current = v;
                            trace.push(v);
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-3 {
                    break;
                }
            }
        }
        traces.push(trace);
        if best.as_ref().is_none_or(|(_, b)| current > *b) {
            best = Some((theta, current));
        }
    }
    let (theta, log_likelihood) = best.ok_or(GpError::NotPositiveDefinite(MAX_JITTER))?;
    Ok(HyperFit {
        params: KernelParams {
            length_scales: theta[..d].iter().map(|v| v.exp()).collect(),
            signal_var: theta[d].exp(),
            jitter,
        },
        log_likelihood,
        traces,
    })
}
