//! Calibration of fixed-topology neural controllers for simulated groups of
//! five fish so that their collective trajectories match reference data.
//!
//! * [`sim`]: arena, perception, kinematics and trajectories.
//! * [`controller`]: the 20-10-2 `tanh` perceptron and its flat genome.
//! * [`metrics`]: behavioural histograms, Hellinger similarity and the
//!   biomimetism score.
//! * [`qd`]: the CVT-MAP-Elites engine.
//! * [`cmaes`]: the CMA-ES baseline.
//! * [`stats`]: Mann-Whitney U and trial summaries.
//! * [`harness`]: configuration, control data, experiments and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmaes;
pub mod controller;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod qd;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
