//! Finite-dimensional boundary feedback stabilization of Navier-Stokes flow near an unstable equilibrium.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod feedback;
pub mod linalg;
pub mod mesh;
pub mod norms;
pub mod ops;
pub mod simulation;
pub mod spectral;
pub mod stabilizability;

pub use error::{Error, Result};
