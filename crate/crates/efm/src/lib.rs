//! Conditional generative modeling with matrix-valued flow fields.
//!
//! A single network u(t, c, x) in R^{d x (1+k)} is trained against the
//! spacetime Jacobian of kernel interpolants fit on multi-marginal optimal
//! transport couplings. Contracting the field along a path through (t, c)
//! yields an ODE velocity, which supports both generation at a fixed
//! condition and style transfer between conditions with one model.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod hull;
pub mod inference;
pub mod interpolant;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod training;
pub mod transport;

pub use error::{EfmError, Result};
