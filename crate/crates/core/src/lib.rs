//! Residuals of the tangential-Laplacian system `[[Du]]^⊥ Δu = 0` and its
//! p- and ∞-Laplacian relatives, plus rigidity checks on the images of
//! solutions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod maps;
pub mod operators;
pub mod quad;
pub mod rigidity;
pub mod separated;
pub mod variational;

pub use error::{Error, Result};
