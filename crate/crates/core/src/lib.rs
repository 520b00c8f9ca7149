//! Koppelman integral operators on affine cones over smooth projective
//! complete intersections, with Monte Carlo quadrature on the regular part
//! and an experiment harness for the associated integral estimates.

pub mod cli;
pub mod cutoff;
pub mod error;
pub mod fit;
pub mod forms;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod poly;
pub mod report;
pub mod roots;
pub mod sampling;
pub mod varieties;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
