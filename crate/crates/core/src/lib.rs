//! Numerical laboratory for statistical conservation laws of the 1-D viscous
//! scalar conservation law `u_t + g(u)_x = eps * u_xx` with random initial data
//! `u(0, x) = u0(x, xi)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`flux`]: polynomial fluxes and symbolic coefficients of the
//!   derivative-PDF hierarchy.
//! * [`solver`]: periodic method-of-lines solver and stencil derivatives.
//! * [`ensemble`]: reproducible sampling of `xi` and batch solves.
//! * [`stats`]: histogram estimators of multi-point and derivative PDFs and
//!   verifiers for the master-equation identities.
//! * [`closure`]: the independence-closure CDF solver and the triple closure.
//! * [`pipeline`]: configuration, demo configs and report generation.

pub mod closure;
pub mod ensemble;
pub mod error;
pub mod flux;
pub mod pipeline;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
