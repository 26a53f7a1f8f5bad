//! Sparse recovery for the generalized multiple measurement vector model
//! `y^(i) = A^(i) x^(i) + e^(i)`, `i = 0..d`, where all `x^(i)` share one
//! row support.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conditions;
pub mod convex;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod model;
pub mod momp;
pub mod rng;

pub use conditions::{evaluate_conditions, ConditionReport, LocalIsometryProfile, Spark};
pub use convex::{lopt_solve, popt_solve, ConvexResult, SolverConfig};
pub use error::{GmmvError, Result};
pub use model::{
    MeasurementEnsemble, NoiseSpec, Observations, SignalDistribution, SignalEnsemble, SupportSet,
};
pub use momp::{momp_solve, MompConfig, MompResult};
