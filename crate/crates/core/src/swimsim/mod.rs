//! Deterministic planar articulated swimmer.
//!
//! A head link and five tail links joined by hinges, driven by a
//! crank-slider tendon drive and pushed around by a quasi-steady fluid
//! model. See [`dynamics`] for the equations of motion and [`fluid`] for the
//! force decomposition.

pub mod dynamics;
pub mod fluid;
pub mod model;
pub mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dynamics::{forward_dynamics, mass_matrix, mechanical_energy, ChainParams, Integrator, SwimmerState};
pub use fluid::{fluid_wrench, FluidCoefficients, LinkTwist, Wrench};
pub use model::SwimmerModel;
pub use trajectory::{Frame, MarkerTrajectory, Point};

use crate::params::{ParamBounds, ParamError, ParamVector};

pub const MARKER_COUNT: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at t = {time:.4} s")]
    Divergence { time: f64 },
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("invalid simulation settings: {0}")]
    Config(String),
}

/// Integration and sampling schedule of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "SimConfig::default_dt")]
    pub dt: f64,
    #[serde(default = "SimConfig::default_duration")]
    pub duration: f64,
    /// Initial transient discarded before sampling starts.
    #[serde(default = "SimConfig::default_warmup")]
    pub warmup: f64,
    #[serde(default = "SimConfig::default_sample_rate")]
    pub sample_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: Self::default_dt(),
            duration: Self::default_duration(),
            warmup: Self::default_warmup(),
            sample_rate: Self::default_sample_rate(),
        }
    }
}

impl SimConfig {
    fn default_dt() -> f64 {
        1e-3
    }
    fn default_duration() -> f64 {
        5.0
    }
    fn default_warmup() -> f64 {
        1.0
    }
    fn default_sample_rate() -> f64 {
        60.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return bad("sample_rate must be positive");
        }
        if !(self.warmup >= 0.0 && self.duration > self.warmup && self.duration.is_finite()) {
            return bad("duration must exceed warmup >= 0");
        }
        if self.dt > 1.0 / self.sample_rate {
            return bad("dt must not exceed the sampling interval");
        }
        Ok(())
    }

    /// `floor((duration - warmup) * sample_rate) + 1`
    pub fn frame_count(&self) -> usize {
        ((self.duration - self.warmup) * self.sample_rate + 1e-9).floor() as usize + 1
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.frame_count())
            .map(|i| self.warmup + i as f64 / self.sample_rate)
            .collect()
    }
}

/// Simulates one trial from the straight-at-rest state.
pub fn simulate(
    theta: &ParamVector,
    frequency: f64,
    config: &SimConfig,
    model: &SwimmerModel,
) -> Result<MarkerTrajectory, SimError> {
    simulate_from(theta, frequency, config, model, SwimmerState::straight_at_rest(), 1.0)
}

/// General form of [`simulate`]: arbitrary initial state and a drive sign
/// (`-1` negates the actuation signal).
///
/// Samples falling between integration steps are linearly interpolated
/// from the bracketing steps, so `dt` need not divide the sampling interval.
pub fn simulate_from(
    theta: &ParamVector,
    frequency: f64,
    config: &SimConfig,
    model: &SwimmerModel,
    initial: SwimmerState,
    drive_sign: f64,
) -> Result<MarkerTrajectory, SimError> {
    ParamBounds::swimmer().check_feasible(theta)?;
    config.validate()?;
    if !(frequency >= 0.0 && frequency.is_finite()) {
        return Err(SimError::Config(format!("frequency must be >= 0, got {frequency}")));
    }
    if !model.is_valid() {
        return Err(SimError::Config("swimmer model has non-positive geometry".into()));
    }

    let t0 = initial.t;
    let mut integ = Integrator::new(model, ChainParams::from_theta(theta), frequency, config.dt, initial, drive_sign);
    let times = config.sample_times();
    let mut frames = Vec::with_capacity(times.len());
    let mut prev_markers = integ.markers();
    let mut prev_t = t0;
    let mut next_sample = 0;

    // Samples at or before the initial time.
    while next_sample < times.len() && times[next_sample] <= prev_t + 1e-12 {
        frames.push(Frame { t: times[next_sample], markers: prev_markers });
        next_sample += 1;
    }
    while next_sample < times.len() {
        integ.step()?;
        let t = integ.state().t;
        let markers = integ.markers();
        while next_sample < times.len() && times[next_sample] <= t + 1e-9 * config.dt {
            let ts = times[next_sample];
            let w = ((ts - prev_t) / (t - prev_t)).clamp(0.0, 1.0);
            let sample = if w >= 1.0 - 1e-9 {
                markers
            } else {
                std::array::from_fn(|m| {
                    [
                        prev_markers[m][0] + w * (markers[m][0] - prev_markers[m][0]),
                        prev_markers[m][1] + w * (markers[m][1] - prev_markers[m][1]),
                    ]
                })
            };
            frames.push(Frame { t: ts, markers: sample });
            next_sample += 1;
        }
        prev_markers = markers;
        prev_t = t;
    }

    Ok(MarkerTrajectory {
        frequency,
        sample_rate: config.sample_rate,
        frames,
    })
}
