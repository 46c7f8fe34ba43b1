//! Exact stochastic representation of the spatially homogeneous Landau
//! equation for Maxwellian molecules, and Monte Carlo verification of its
//! two-sided transition-density bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod density;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
