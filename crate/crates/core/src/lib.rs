//! Planner/executor co-evolution on a synthetic mobile GUI.

pub mod env;
pub mod error;
pub mod rng;
pub mod scalar;
pub mod tasks;

pub use error::{Error, Result};
pub mod policy;
pub mod reward;
pub mod curriculum;
pub mod trainer;
pub mod planner;
pub mod agent;

/// Executor parameters in double precision.
pub type Params = policy::PolicyParams<f64>;
/// Executor parameters in single precision.
pub type ParamsF32 = policy::PolicyParams<f32>;
pub mod experiments;
pub mod io;
