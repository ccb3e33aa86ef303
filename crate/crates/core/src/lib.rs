//! Solvers and diagnostics for a haptotaxis model with bistable growth:
//! a diffuse-interface reaction-diffusion-advection system, its
//! sharp-interface limit as a level-set flow, and tools that compare the two.

pub mod analysis;
pub mod bistable;
pub mod config;
pub mod curve;
pub mod diffuse;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod linalg;
pub mod shape;
pub mod sharp;

pub use error::{Error, Result};
pub use grid::{Domain, Grid, ScalarField, VectorField};
