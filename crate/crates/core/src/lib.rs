//! Generalized extended CMV matrices, their gauge symmetries, transfer
//! and Szego cocycles, and localization diagnostics for the mosaic
//! unitary almost Mathieu operator.

pub mod analysis;
pub mod cocycle;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod operators;
pub mod spectral;

pub use error::{CmvError, Result};
pub use linalg::{Mat2, Tridiagonal};
pub use num_complex::Complex64 as C64;
