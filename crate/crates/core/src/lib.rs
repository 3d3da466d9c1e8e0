//! Zeroth-order optimization with two-point SPSA estimators.
//!
//! The crate provides MeZO (in-place ZO-SGD), a reference ZO-SVRG, the
//! memory-efficient variance-reduced MeZO-SVRG, a first-order SGD baseline,
//! seed-replay trajectories and a small benchmark harness.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod objectives;
pub mod optimizers;
pub mod oracles;
pub mod params;
pub mod rng;
pub mod trajectory;

pub use error::{Result, ZoError};
pub use estimators::{GradientEstimate, SpsaConfig};
pub use objectives::{Minibatch, Objective, SamplingMode};
pub use optimizers::{run, Budget, OptimizerConfig, OptimizerKind, RunOutcome, RunRecord, RunSpec};
pub use params::ParamVector;
pub use rng::PerturbationSeed;
pub use trajectory::{replay, TrajectoryLog};
