//! Variational computation of ground states, symmetry-constrained minimizers
//! and mountain-pass levels of `-Δu = ||x| - 2|^alpha u^{p-1}` on the annulus
//! `1 < |x| < 3`, with Dirichlet boundary conditions.

pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod minimize;
pub mod mpass;
pub mod testfun;
pub mod weight;

pub use error::{Error, Result};
