//! Heat kernels of generalized Laplacians on model manifolds, built by time-sliced
//! kernel products, with Getzler rescaling and local index densities.

pub mod error;
pub mod experiments;
pub mod fit;
pub mod flatmodel;
pub mod geometry;
pub mod par;
pub mod superalgebra;
pub mod kernels;
pub mod oracle;
pub mod cli;
pub mod dirac;
pub mod rescale_index;

pub use error::{Error, Result};
