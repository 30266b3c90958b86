//! Reliability analysis for limit states built on discretized ODE/PDE models.
//!
//! The crate estimates rare-event failure probabilities `P[G(U) <= 0]` for
//! limit-state functions `G` of independent standard-normal parameters, where
//! `G` involves the solution of a scalar ODE or a 1-D elliptic boundary value
//! problem. Alongside the estimators (closed form, quadrature, Monte Carlo,
//! sequential importance sampling) it provides the first-order reliability
//! method (FORM) and a-priori bounds on the discretization-induced error of
//! the failure probability in terms of the mesh size `h`, the discretization
//! order `s` and the FORM estimate.
//!
//! Modules follow the pipeline: [`normal`] and [`kle`] supply distributional
//! primitives and the random-field expansion, [`fem1d`] and [`ode`] the
//! solvers, [`limit_state`] the evaluator interface, [`form`], [`estimators`]
//! and [`bounds`] the reliability machinery, and [`experiments`] the
//! convergence studies exposed by the CLI.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fem1d;
pub mod form;
pub mod kle;
pub mod limit_state;
pub mod normal;
pub mod ode;

pub use error::{Error, Result};
