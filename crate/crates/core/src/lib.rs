//! Exact solutions of parabolic boundary value problems on a half line
//! with Robin and second-order Robin boundary conditions, built from
//! odd/even Hilbert transform pairs.
//!
//! The crate is organised as a pipeline: [`transforms`] provides the
//! half-line integral transforms, [`catalog`] the families of separated
//! elementary solutions, [`solver`] assembles spectral densities that
//! satisfy a given boundary condition and initial condition, [`oracle`]
//! holds independent reference solutions, and [`eval`] turns spectral
//! densities into sampled fields with residual diagnostics.

pub mod catalog;
pub mod config;
pub mod error;
pub mod eval;
pub mod expr;
pub mod oracle;
pub mod quad;
pub mod solver;
pub mod special;
pub mod transforms;

pub use error::{HlError, Result};
