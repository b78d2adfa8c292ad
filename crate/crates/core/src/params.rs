//! The bounded calibration parameter space.
//!
//! Canonical swimmer layout (frozen in every file format):
//!
//! | index  | group            | bounds        | unit      |
//! |--------|------------------|---------------|-----------|
//! | 0..5   | fluid coefficient| [0, 10]       | -         |
//! | 5      | motor arm length | [0.01, 0.06]  | m         |
//! | 6..11  | hinge stiffness  | [0.1, 5.0]    | N*m/rad   |
//! | 11..16 | hinge damping    | [0.0, 2.0]    | N*m*s/rad |
//!
//! The optimizers in this crate are dimension-agnostic and also run on toy
//! boxes (e.g. a 1-D test function); [`ParamBounds::swimmer`] is the only
//! constructor that yields the 16-dimensional space the simulator accepts.

use std::collections::HashSet;
use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{self, Stream};

pub const SWIMMER_DIM: usize = 16;

pub const FLUID_LABELS: [&str; 5] = [
    "fluid_blunt_drag",
    "fluid_slender_drag",
    "fluid_angular_drag",
    "fluid_kutta_lift",
    "fluid_magnus_lift",
];

pub const IDX_FLUID: usize = 0;
pub const IDX_ARM: usize = 5;
pub const IDX_STIFFNESS: usize = 6;
pub const IDX_DAMPING: usize = 11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("component {index} ({label}) = {value} lies outside [{lower}, {upper}]")]
    Infeasible {
        index: usize,
        label: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {label}: lower {lower} must be < upper {upper}")]
    EmptyInterval { label: String, lower: f64, upper: f64 },
    #[error("duplicate dimension label {0}")]
    DuplicateLabel(String),
    #[error("parameter space must have at least one dimension")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
}

impl Dimension {
    pub fn new(label: impl Into<String>, lower: f64, upper: f64, unit: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            lower,
            upper,
            unit: unit.into(),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// An axis-aligned box with labelled dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParamBounds {
    dims: Vec<Dimension>,
}

impl<'de> Deserialize<'de> for ParamBounds {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let dims = Vec::<Dimension>::deserialize(deserializer)?;
        ParamBounds::new(dims).map_err(serde::de::Error::custom)
    }
}

impl ParamBounds {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, ParamError> {
        if dims.is_empty() {
            return Err(ParamError::Empty);
        }
        let mut seen = HashSet::new();
        for d in &dims {
            // Written so that NaN bounds are rejected too.
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(ParamError::EmptyInterval {
                    label: d.label.clone(),
                    lower: d.lower,
                    upper: d.upper,
                });
            }
            if !seen.insert(d.label.as_str()) {
                return Err(ParamError::DuplicateLabel(d.label.clone()));
            }
        }
        Ok(Self { dims })
    }

    /// The 16-dimensional swimmer space in canonical order.
    pub fn swimmer() -> Self {
        let mut dims = Vec::with_capacity(SWIMMER_DIM);
        for label in FLUID_LABELS {
            dims.push(Dimension::new(label, 0.0, 10.0, "-"));
        }
        dims.push(Dimension::new("motor_arm_length", 0.01, 0.06, "m"));
        for j in 1..=5 {
            dims.push(Dimension::new(format!("hinge_stiffness_{j}"), 0.1, 5.0, "N*m/rad"));
        }
        for j in 1..=5 {
            dims.push(Dimension::new(format!("hinge_damping_{j}"), 0.0, 2.0, "N*m*s/rad"));
        }
        Self { dims }
    }

    /// Unit box `[0, 1]^dim` with labels `x0, x1, ...`.
    pub fn unit_box(dim: usize) -> Self {
        Self::new(
            (0..dim)
                .map(|i| Dimension::new(format!("x{i}"), 0.0, 1.0, "-"))
                .collect(),
        )
        .expect("unit box is valid for dim >= 1")
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn is_swimmer_space(&self) -> bool {
        self.dim() == SWIMMER_DIM
    }

    pub fn lower(&self) -> ParamVector {
        ParamVector(self.dims.iter().map(|d| d.lower).collect())
    }

    pub fn upper(&self) -> ParamVector {
        ParamVector(self.dims.iter().map(|d| d.upper).collect())
    }

    pub fn midpoint(&self) -> ParamVector {
        ParamVector(self.dims.iter().map(Dimension::midpoint).collect())
    }

    fn check_len(&self, theta: &ParamVector) -> Result<(), ParamError> {
        if theta.len() != self.dim() {
            return Err(ParamError::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Checks dimension, finiteness and box membership.
    pub fn check_feasible(&self, theta: &ParamVector) -> Result<(), ParamError> {
        self.check_len(theta)?;
        theta.check_finite()?;
        for (index, (d, &value)) in self.dims.iter().zip(theta.iter()).enumerate() {
            if value < d.lower || value > d.upper {
                return Err(ParamError::Infeasible {
                    index,
                    label: d.label.clone(),
                    value,
                    lower: d.lower,
                    upper: d.upper,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &ParamVector) -> bool {
        self.check_feasible(theta).is_ok()
    }

    /// Componentwise projection onto the box. Feasible inputs come back
    /// bit-identical.
    pub fn clip(&self, theta: &ParamVector) -> Result<ParamVector, ParamError> {
        self.check_len(theta)?;
        theta.check_finite()?;
        Ok(ParamVector(
            self.dims
                .iter()
                .zip(theta.iter())
                .map(|(d, &v)| v.clamp(d.lower, d.upper))
                .collect(),
        ))
    }

    /// Affine map of a feasible point onto the unit box.
    pub fn normalize(&self, theta: &ParamVector) -> Result<ParamVector, ParamError> {
        self.check_feasible(theta)?;
        Ok(self.normalize_unchecked(theta))
    }

    /// Same affine map without the feasibility check; used for directions
    /// and for points that are about to be clipped.
    pub fn normalize_unchecked(&self, theta: &ParamVector) -> ParamVector {
        ParamVector(
            self.dims
                .iter()
                .zip(theta.iter())
                .map(|(d, &v)| (v - d.lower) / d.width())
                .collect(),
        )
    }

    pub fn denormalize(&self, unit: &ParamVector) -> ParamVector {
        ParamVector(
            self.dims
                .iter()
                .zip(unit.iter())
                .map(|(d, &u)| d.lower + u * d.width())
                .collect(),
        )
    }

    /// Uniform draw from the box using the caller's generator.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        ParamVector(
            self.dims
                .iter()
                .map(|d| {
                    let u: f64 = rng.random();
                    d.lower + u * d.width()
                })
                .collect(),
        )
    }

    /// Seed-matched initial point shared by every method of an experiment.
    pub fn random_init(&self, seed: u64) -> ParamVector {
        let mut rng = seeding::rng(seed, Stream::Init);
        self.sample_uniform(&mut rng)
    }
}

/// A point of the parameter space in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn check_finite(&self) -> Result<(), ParamError> {
        match self.0.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            Some((index, &value)) => Err(ParamError::NonFinite { index, value }),
            None => Ok(()),
        }
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + scale * direction`
    pub fn add_scaled(&self, scale: f64, direction: &ParamVector) -> ParamVector {
        ParamVector(
            self.0
                .iter()
                .zip(&direction.0)
                .map(|(a, d)| a + scale * d)
                .collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    // Accessors for the swimmer layout.

    pub fn fluid(&self) -> [f64; 5] {
        let mut c = [0.0; 5];
        c.copy_from_slice(&self.0[IDX_FLUID..IDX_FLUID + 5]);
        c
    }

    pub fn arm_length(&self) -> f64 {
        self.0[IDX_ARM]
    }

    pub fn stiffness(&self) -> [f64; 5] {
        let mut k = [0.0; 5];
        k.copy_from_slice(&self.0[IDX_STIFFNESS..IDX_STIFFNESS + 5]);
        k
    }

    pub fn damping(&self) -> [f64; 5] {
        let mut d = [0.0; 5];
        d.copy_from_slice(&self.0[IDX_DAMPING..IDX_DAMPING + 5]);
        d
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
