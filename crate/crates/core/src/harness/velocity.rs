use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::objective::{Evaluator, SwimObjective};
use crate::params::ParamVector;
use crate::swimsim::trajectory::sig9;

pub const VELOCITY_HEADER: &str = "method,seed,frequency_hz,v_sim_m_s,v_real_m_s,abs_error_mm_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityRow {
    pub method: String,
    pub seed: u64,
    pub frequency_hz: f64,
    /// `None` when the simulation diverged.
    pub v_sim: Option<f64>,
    pub v_real: f64,
    pub abs_error_mm_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodVelocity {
    pub method: String,
    pub seed: u64,
    /// Mean over non-divergent frequencies; `None` if all diverged.
    pub mae_mm_s: Option<f64>,
    /// Frequencies left out of the mean because they diverged.
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySweep {
    pub rows: Vec<VelocityRow>,
    pub methods: Vec<MethodVelocity>,
}

/// Mean of the finite entries and the number of missing ones.
pub fn mae_excluding_divergent(errors: &[Option<f64>]) -> (Option<f64>, usize) {
    let finite: Vec<f64> = errors.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let missing = errors.len() - finite.len();
    if finite.is_empty() {
        return (None, missing);
    }
    (Some(finite.iter().sum::<f64>() / finite.len() as f64), missing)
}

/// Per-frequency forward-velocity error of each `(name, seed, theta)`.
pub fn velocity_sweep(entries: &[(String, u64, ParamVector)], objective: &SwimObjective) -> Result<VelocitySweep, HarnessError> {
    let reference = objective.reference();
    let mut rows = Vec::new();
    let mut methods = Vec::new();
    for (name, seed, theta) in entries {
        let result = objective
            .evaluate(theta)
            .map_err(|e| HarnessError::Config(format!("velocity check for {name}: {e}")))?;
        let mut errors = Vec::new();
        for ((f, v_sim), v_real) in reference.frequencies.iter().zip(&result.sim_velocities).zip(&reference.velocities) {
            let err = v_sim.map(|v| 1e3 * (v - v_real).abs());
            errors.push(err);
            rows.push(VelocityRow {
                method: name.clone(),
                seed: *seed,
                frequency_hz: *f,
                v_sim: *v_sim,
                v_real: *v_real,
                abs_error_mm_s: err,
            });
        }
        let (mae, diverged) = mae_excluding_divergent(&errors);
        methods.push(MethodVelocity {
            method: name.clone(),
            seed: *seed,
            mae_mm_s: mae,
            diverged,
        });
    }
    Ok(VelocitySweep { rows, methods })
}

impl VelocitySweep {
    /// Divergent rows carry `inf` in the simulated and error columns.
    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map(sig9).unwrap_or_else(|| "inf".into());
        let mut out = String::from(VELOCITY_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method,
                r.seed,
                sig9(r.frequency_hz),
                num(r.v_sim),
                sig9(r.v_real),
                num(r.abs_error_mm_s)
            ));
        }
        out
    }

    pub fn mae_csv(&self) -> String {
        let mut out = String::from("method,seed,mae_mm_s,diverged_frequencies\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.method,
                m.seed,
                m.mae_mm_s.map(sig9).unwrap_or_else(|| "inf".into()),
                m.diverged
            ));
        }
        out
    }
}
