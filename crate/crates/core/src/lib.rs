//! Simulation and diagnostics for mean-field systems of particles driven by
//! Brownian motion and by scaled, marked jumps fired at state-dependent rates,
//! together with the Gaussian-noise limit system that replaces the jumps.

// `!(x > 0.0)` is deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod cli;
pub mod diagnostics;
mod engine;
pub mod error;
pub mod finite;
pub mod generator;
pub mod limit;
pub mod measure;
pub mod model;
pub mod multipop;
pub mod noise;
pub mod parallel;
pub mod picard;
pub mod stats;

pub use bundle::{empirical_path, JumpEvent, NoiseLog, TimeGrid, TrajectoryBundle};
pub use error::{Error, Result};
pub use finite::{simulate_finite, FiniteSimConfig};
pub use limit::{simulate_limit, IdioMode, LimitSimConfig};
pub use measure::{EmpiricalMeasure1D, WassersteinOrder};
pub use model::ModelSpec;
pub use multipop::{simulate_multipop_finite, simulate_multipop_limit, MultiPopRun, MultiPopSpec};
pub use picard::{picard_solve, picard_step, PicardReport, PicardState};
