//! Quasi-periodic transmission solver for a lossy negative-index grating
//! over a mirror plane.
//!
//! One period of a two-layer cell is discretized with P1 triangles: a
//! dielectric strip above a corrugated interface, a negative-index filling
//! below it down to the mirror plane, and a mode-wise radiation condition on
//! the artificial top boundary.  Small absorption regularizes the
//! sign-changing filling; direct solves, a vanishing-absorption
//! continuation, and the diagnostics backing the solvability theory
//! (contrast condition, boundary-symbol independence) sit on top.
//!
//! Layout:
//! - [`problem`] / [`config`]: physical cell, validation, config files;
//! - [`mesh`] / [`transforms`]: periodic strip meshes and the flattening
//!   maps with their metric tensors;
//! - [`dtn`]: radiating mode sets and the top-boundary mode map;
//! - [`assembly`] / [`linalg`]: sesquilinear forms as banded systems and
//!   the LU kernel underneath;
//! - [`solver`]: direct solves, continuation toward zero absorption,
//!   stability sweeps, energy accounting;
//! - [`oracle`]: closed-form layered solutions for flat interfaces;
//! - [`analysis`]: trace norms, harmonic extension, contrast condition,
//!   boundary-symbol checks.

pub mod analysis;
pub mod assembly;
pub mod config;
pub mod dtn;
pub mod error;
pub mod limits;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
