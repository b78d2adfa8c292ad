use rand::Rng;
use rand_distr::StandardNormal;

use super::{Proposal, Proposer, ProposerContext, ProposerError};
use crate::params::{ParamBounds, ParamVector};
use crate::seeding::{self, Stream};

/// Test double that knows the hidden parameters.
///
/// In normalized coordinates the true step is `d = u* - u_best`. The oracle
/// tilts `d` by a random angle in `[0, sigma_dir]` toward a Gaussian random
/// orthogonal direction (norm preserved) and overshoots it by `gamma`. With
/// `sigma_dir = 0` and `gamma = 1` it returns `theta*` exactly.
#[derive(Debug, Clone)]
pub struct GroundTruthOracle {
    theta_star: ParamVector,
    bounds: ParamBounds,
    gamma: f64,
    sigma_dir: f64,
    seed: u64,
}

impl GroundTruthOracle {
    pub fn new(theta_star: ParamVector, bounds: ParamBounds, gamma: f64, sigma_dir: f64, seed: u64) -> Self {
        assert!(gamma > 0.0, "overshoot must be positive");
        assert!(sigma_dir >= 0.0, "direction noise must be non-negative");
        Self {
            theta_star,
            bounds,
            gamma,
            sigma_dir,
            seed,
        }
    }

    fn tilt(&self, d: &[f64], round: usize) -> Vec<f64> {
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if self.sigma_dir == 0.0 || norm == 0.0 || d.len() < 2 {
            return d.to_vec();
        }
        let mut rng = seeding::rng_indexed(self.seed, Stream::GroundTruthOracle, round as u64);
        let unit: Vec<f64> = d.iter().map(|v| v / norm).collect();
        let g: Vec<f64> = (0..d.len()).map(|_| rng.sample(StandardNormal)).collect();
        let along: f64 = g.iter().zip(&unit).map(|(a, b)| a * b).sum();
        let ortho: Vec<f64> = g.iter().zip(&unit).map(|(a, b)| a - along * b).collect();
        let ortho_norm = ortho.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ortho_norm == 0.0 {
            return d.to_vec();
        }
        let angle = self.sigma_dir * rng.random::<f64>();
        let (s, c) = angle.sin_cos();
        unit.iter()
            .zip(&ortho)
            .map(|(u, o)| norm * (c * u + s * o / ortho_norm))
            .collect()
    }
}

impl Proposer for GroundTruthOracle {
    fn name(&self) -> &str {
        "ground_truth_oracle"
    }

    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
        let u_best = self.bounds.normalize_unchecked(&ctx.theta_best);
        let u_star = self.bounds.normalize_unchecked(&self.theta_star);
        let d: Vec<f64> = u_star.iter().zip(u_best.iter()).map(|(s, b)| s - b).collect();
        let tilted = self.tilt(&d, ctx.round);
        // theta' = theta* + W (gamma * tilted - d), written relative to theta*
        // so that the untilted, gamma = 1 case returns theta* bit-exactly.
        let theta = ParamVector(
            self.theta_star
                .iter()
                .zip(self.bounds.dims())
                .zip(tilted.iter().zip(&d))
                .map(|((s, dim), (t, d))| s + dim.width() * (self.gamma * t - d))
                .collect(),
        );
        Ok(Proposal {
            theta,
            rationale: format!(
                "ground-truth direction, overshoot {}, tilt <= {} rad",
                self.gamma, self.sigma_dir
            ),
            proposer: self.name().to_string(),
        })
    }
}
