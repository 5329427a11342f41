//! Simulation toolkit for the critical configuration model.
//!
//! The crate builds configuration-model multigraphs from degree sequences,
//! explores them with a depth-first walk that encodes component sizes and
//! surplus edges, runs bond percolation (direct deletion, the explosion
//! construction and a λ-coupled grid), the exponential-clock dynamic
//! construction, the multiplicative coalescent, and samples the limiting
//! reflected Brownian motion with parabolic drift. The [`harness`] module
//! compares finite-n ensembles against simulated limit ensembles.
//!
//! Numerical code that does not depend on integer combinatorics is generic
//! over a [`Scalar`] (`f32` or `f64`); the aliases below fix the common
//! `f64` instantiations.

pub mod coalescent;
pub mod degrees;
pub mod dynamic;
pub mod error;
pub mod exploration;
pub mod harness;
pub mod io;
pub mod limit;
pub mod multigraph;
pub mod percolation;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod unionfind;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` degree statistics.
pub type DegreeStats = degrees::DegreeStats<f64>;
/// `f64` limit parameters.
pub type LimitParams = limit::LimitParams<f64>;
/// `f64` reflected path sample.
pub type ExcursionSample = limit::ExcursionSample<f64>;
/// `f64` coalescent state.
pub type CoalescentState = coalescent::CoalescentState<f64>;
/// `f32` coalescent state.
pub type CoalescentStateF32 = coalescent::CoalescentState<f32>;
/// Exact criticality parameter as a reduced fraction.
pub type ExactRatio = num_rational::Ratio<u128>;
