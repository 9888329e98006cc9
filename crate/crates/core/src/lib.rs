//! Simulation laboratory for systems of continuous martingales that model
//! contestants' winning probabilities.
//!
//! * [`analytic`]: closed-form means, laws and variance caps.
//! * [`engine`]: exact, time-free sampler of level-crossing records.
//! * [`constructions`]: the extremal constructions compiled into stages.
//! * [`wf`]: path simulation of the multi-allele Wright-Fisher diffusion.
//! * [`pde`]: finite-difference solver for the joint hitting probability.
//! * [`stats`]: summaries, goodness of fit and bound reports.
//! * [`montecarlo`]: seeded, order-independent parallel run distribution.
//! * [`market`]: ingestion and crossing analysis of observed probability series.

// `!(x < y)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod constructions;
pub mod engine;
pub mod error;
pub mod market;
pub mod montecarlo;
pub mod pde;
pub mod rng;
pub mod stats;
pub mod wf;

pub use analytic::{BoundBundle, ThresholdPair};
pub use error::{Error, Result};
