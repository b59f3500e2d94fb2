//! Simulation and analysis of microwave quantum illumination.
//!
//! Two-mode Gaussian sources are propagated through an amplifier, target and
//! receiver chain, sampled as heterodyne records, optionally routed through
//! an IF time-series path, and scored by phase-conjugate, homodyne,
//! heterodyne and passive receivers. Every receiver has a closed form and a
//! record-level estimator so the two can be checked against each other.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod chain;
pub mod cli;
pub mod constants;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod receivers;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
