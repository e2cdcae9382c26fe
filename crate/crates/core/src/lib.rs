//! Multi-population discrete-time regularized mean-field games: equilibrium
//! solvers and spectral contraction certificates.

pub mod contraction;
pub mod error;
pub mod model;
pub mod operators;
pub mod rates;
pub mod slowfast;
pub mod solvers;
pub mod spectral;

pub use error::{MfgError, Result};
pub use model::{LipschitzProfile, MfgModel, PopulationConstants, StateMeasureFlow};

pub const REPORT_SCHEMA: &str = "mfgc-report/1";
