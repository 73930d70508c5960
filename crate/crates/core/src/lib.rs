//! Numerical simulator for expanding curvature flows of star-shaped radial
//! graphs in Euclidean and hyperbolic space, with runtime a-priori bound
//! monitors, weighted curvature integrals and an inequality suite.

pub mod body;
pub mod config;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod harness;
pub mod manifold;
pub mod numeric;
pub mod quantities;
pub mod symfun;

pub use error::{Error, Result};
