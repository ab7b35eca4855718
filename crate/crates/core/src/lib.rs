//! Quenched small-deviation estimates for random walks with an i.i.d.
//! random environment in time.
//!
//! The crate estimates tube-survival probabilities three ways (exact lattice
//! DP or grid propagation, naive Monte Carlo, multilevel splitting),
//! estimates the confinement rate function `gamma(beta)` of Brownian motion
//! in a tube whose centre follows an independent Brownian path, and checks
//! the fitted decay constant of `ln P` against `-C_{g,h} sigma_Q^2 gamma(sigma_A / sigma_Q)`.

pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod estimate;
pub mod gamma;
pub mod mc;
pub mod normal;
pub mod quench_dp;
pub mod rate;
pub mod rng;
pub mod tube;
pub mod walk;

pub use env::{AssumptionReport, EnvRealization, EnvironmentSpec, Family, StepKind, StepLaw};
pub use error::{Error, Result};
pub use estimate::{Method, SurvivalEstimate};
pub use tube::{PiecewiseLinear, TubeSpec};
