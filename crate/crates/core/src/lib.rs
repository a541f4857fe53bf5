//! Registration and interpolation of space-time implicit surfaces.
//!
//! Two simulation runs are turned into space-time signed-distance volumes
//! ([`levelset`]), matched by hierarchical optical flow with residual
//! iterations and surface projection ([`flof`]), and the resulting dense
//! deformations are used to synthesize in-between runs ([`interpolation`]).

#![allow(clippy::needless_range_loop)]

pub mod deformation;
pub mod error;
pub mod flof;
pub mod grid;
pub mod interpolation;
pub mod levelset;
pub mod optical_flow;
pub mod pipeline;

pub use error::{Error, Result};
pub use grid::{Dims, ScalarField, VectorField};
