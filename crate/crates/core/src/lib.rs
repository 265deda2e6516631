//! Simulation, exact moments and limit-theorem diagnostics for a Bernoulli
//! process with linear memory of its running success count.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gamma_seq;
pub mod moments;
pub mod montecarlo;
pub mod process;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use gamma_seq::GammaRatioTable;
pub use process::{ExactPmf, ModelParams, ProcessState, Trajectory};
