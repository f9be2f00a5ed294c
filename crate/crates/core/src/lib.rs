//! Simulation engine for designing MAMS-ROCI randomised trials.
//!
//! A MAMS-ROCI trial randomises patients across several points of a
//! continuous treatment-administration variable (dose frequency, duration)
//! and models the treatment-response curve to find the most-preferred arm
//! that is non-inferior to the standard of care. This crate provides the
//! machinery to design such a trial by simulation:
//!
//! - [`trial`] — arm grids, response scenarios, margins, true classification
//! - [`fp`] — FP2 logistic regression on grouped binomial data
//! - [`inference`] — delta-method and bootstrap risk-ratio bounds, decision rules
//! - [`mc`] — Monte Carlo trial replication and operating characteristics
//! - [`samplesize`] — power over a grid of N, loess smoothing, recommendation
//! - [`interim`] — two-arm survival interim: required events and a log-rank oracle

pub mod error;
pub mod fp;
pub mod inference;
pub mod interim;
mod linalg;
pub mod mc;
pub mod rng;
pub mod samplesize;
pub mod stats;
pub mod trial;

pub use error::{Error, Result};
