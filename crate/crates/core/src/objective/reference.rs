//! Reference marker data: synthetic (from a hidden parameter vector) or
//! ingested from a directory of CSV files.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{forward_velocity, local_frame, FrameError};
use crate::error::IoError;
use crate::params::{ParamBounds, ParamError, ParamVector};
use crate::seeding::{self, Stream};
use crate::swimsim::trajectory::{MarkerTrajectory, TrajectoryError};
use crate::swimsim::{simulate, SimConfig, SimError, SwimmerModel};

/// Actuation frequencies 0.50, 0.75, ..., 2.25 Hz.
pub const DEFAULT_FREQUENCIES: [f64; 8] = [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25];

/// Rejection cap when drawing a non-divergent hidden parameter vector.
pub const HIDDEN_DRAW_LIMIT: usize = 100;

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("no non-divergent hidden parameter vector in {0} draws")]
    NoStableDraw(usize),
    #[error("hidden parameter vector diverges: {0}")]
    Divergent(SimError),
    #[error("frequency list must be non-empty, positive and strictly increasing")]
    BadFrequencies,
    #[error("reference at {frequency} Hz: {source}")]
    Frame {
        frequency: f64,
        #[source]
        source: FrameError,
    },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Meta(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic {
        /// Hidden parameter vector the references were generated from.
        theta_star: ParamVector,
        hidden_seed: Option<u64>,
        /// Std of the additive Gaussian observation noise, meters.
        noise_sigma: f64,
        noise_seed: u64,
    },
    Ingested {
        source: String,
    },
}

impl Provenance {
    pub fn theta_star(&self) -> Option<&ParamVector> {
        match self {
            Provenance::Synthetic { theta_star, .. } => Some(theta_star),
            Provenance::Ingested { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub sample_rate_hz: f64,
    pub frequencies: Vec<f64>,
    pub provenance: Provenance,
    /// Schedule the data were generated with or resampled to.
    pub sim: SimConfig,
}

/// One reference trajectory per actuation frequency plus the measured
/// forward velocities.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub frequencies: Vec<f64>,
    /// World-frame trajectories, one per frequency.
    pub trajectories: Vec<MarkerTrajectory>,
    /// Body-frame copies of `trajectories`.
    pub local: Vec<MarkerTrajectory>,
    /// Forward velocity of each reference trajectory, m/s.
    pub velocities: Vec<f64>,
    pub provenance: Provenance,
    pub sim: SimConfig,
}

pub fn validate_frequencies(freqs: &[f64]) -> Result<(), ReferenceError> {
    let ok = !freqs.is_empty()
        && freqs.iter().all(|f| f.is_finite() && *f > 0.0)
        && freqs.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(ReferenceError::BadFrequencies)
    }
}

impl ReferenceSet {
    fn assemble(
        frequencies: Vec<f64>,
        trajectories: Vec<MarkerTrajectory>,
        provenance: Provenance,
        sim: SimConfig,
    ) -> Result<Self, ReferenceError> {
        let mut local = Vec::with_capacity(trajectories.len());
        let mut velocities = Vec::with_capacity(trajectories.len());
        for (f, traj) in frequencies.iter().zip(&trajectories) {
            let wrap = |source| ReferenceError::Frame { frequency: *f, source };
            local.push(local_frame(traj).map_err(wrap)?);
            velocities.push(forward_velocity(traj).map_err(wrap)?);
        }
        Ok(Self {
            frequencies,
            trajectories,
            local,
            velocities,
            provenance,
            sim,
        })
    }

    /// References simulated from `theta_star`, optionally corrupted by
    /// additive Gaussian noise of std `noise_sigma` meters per coordinate.
    pub fn synthetic(
        theta_star: &ParamVector,
        frequencies: &[f64],
        noise_sigma: f64,
        noise_seed: u64,
        sim: &SimConfig,
        model: &SwimmerModel,
    ) -> Result<Self, ReferenceError> {
        Self::synthetic_inner(theta_star, None, frequencies, noise_sigma, noise_seed, sim, model)
    }

    /// Draws the hidden vector uniformly from the swimmer box (seeded),
    /// redrawing until it is non-divergent at every frequency.
    pub fn synthetic_hidden(
        hidden_seed: u64,
        frequencies: &[f64],
        noise_sigma: f64,
        noise_seed: u64,
        sim: &SimConfig,
        model: &SwimmerModel,
    ) -> Result<Self, ReferenceError> {
        validate_frequencies(frequencies)?;
        let bounds = ParamBounds::swimmer();
        let mut rng = seeding::rng(hidden_seed, Stream::HiddenTheta);
        for _ in 0..HIDDEN_DRAW_LIMIT {
            let theta = bounds.sample_uniform(&mut rng);
            match Self::synthetic_inner(&theta, Some(hidden_seed), frequencies, noise_sigma, noise_seed, sim, model) {
                Ok(r) => return Ok(r),
                Err(ReferenceError::Divergent(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(ReferenceError::NoStableDraw(HIDDEN_DRAW_LIMIT))
    }

    fn synthetic_inner(
        theta_star: &ParamVector,
        hidden_seed: Option<u64>,
        frequencies: &[f64],
        noise_sigma: f64,
        noise_seed: u64,
        sim: &SimConfig,
        model: &SwimmerModel,
    ) -> Result<Self, ReferenceError> {
        validate_frequencies(frequencies)?;
        ParamBounds::swimmer().check_feasible(theta_star)?;
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(ReferenceError::Meta(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        let mut trajectories = Vec::with_capacity(frequencies.len());
        for &f in frequencies {
            match simulate(theta_star, f, sim, model) {
                Ok(t) => trajectories.push(t),
                Err(e @ SimError::Divergence { .. }) => return Err(ReferenceError::Divergent(e)),
                Err(e) => return Err(e.into()),
            }
        }
        if noise_sigma > 0.0 {
            let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
            let mut rng = seeding::rng(noise_seed, Stream::ObservationNoise);
            for t in &mut trajectories {
                *t = t.map_points(|p| [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng)]);
            }
        }
        let provenance = Provenance::Synthetic {
            theta_star: theta_star.clone(),
            hidden_seed,
            noise_sigma,
            noise_seed,
        };
        Self::assemble(frequencies.to_vec(), trajectories, provenance, sim.clone())
    }

    pub fn theta_star(&self) -> Option<&ParamVector> {
        self.provenance.theta_star()
    }

    pub fn meta(&self) -> ReferenceMeta {
        ReferenceMeta {
            sample_rate_hz: self.sim.sample_rate,
            frequencies: self.frequencies.clone(),
            provenance: self.provenance.clone(),
            sim: self.sim.clone(),
        }
    }

    /// Writes `freq_<f>Hz.csv` per frequency plus `meta.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ReferenceError> {
        for t in &self.trajectories {
            t.write_csv(dir)?;
        }
        crate::io::write_json(&dir.join(META_FILE), &self.meta())?;
        Ok(())
    }

    /// Reads a reference directory. Trajectories whose timestamps differ
    /// from the sampling grid of `sim` are linearly resampled onto it.
    pub fn read_dir(dir: &Path, sim: &SimConfig) -> Result<Self, ReferenceError> {
        let meta: ReferenceMeta = crate::io::read_json(&dir.join(META_FILE))?;
        validate_frequencies(&meta.frequencies)?;
        if !(meta.sample_rate_hz > 0.0) {
            return Err(ReferenceError::Meta("sample_rate_hz must be positive".into()));
        }
        let grid = sim.sample_times();
        let mut trajectories = Vec::with_capacity(meta.frequencies.len());
        for &f in &meta.frequencies {
            let raw = MarkerTrajectory::read_csv(dir, f, meta.sample_rate_hz)?;
            let on_grid = raw.frames.len() == grid.len()
                && raw.frames.iter().zip(&grid).all(|(fr, t)| (fr.t - t).abs() <= 1e-6);
            trajectories.push(if on_grid {
                // snap to the exact grid timestamps (CSV keeps 9 digits)
                let mut t = raw;
                for (fr, &g) in t.frames.iter_mut().zip(&grid) {
                    fr.t = g;
                }
                t.sample_rate = sim.sample_rate;
                t
            } else {
                raw.resample(&grid)
            });
        }
        let provenance = match meta.provenance {
            p @ Provenance::Synthetic { .. } => p,
            Provenance::Ingested { source } => Provenance::Ingested { source },
        };
        Self::assemble(meta.frequencies, trajectories, provenance, sim.clone())
    }
}
