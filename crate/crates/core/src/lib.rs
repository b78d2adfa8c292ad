//! Black-box calibration of a planar articulated swimmer simulator.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod params;
pub mod seeding;
pub mod swimsim;
pub mod serde_ext;
pub mod objective;
pub mod proposer;
pub mod calib;
pub mod baselines;
pub mod harness;
