//! Full-order, reduced-basis and kernel surrogate models for the parametric
//! 1D convection-diffusion-reaction problem, plus the pipeline that chains
//! them and reports accuracy against cost.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fom;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod pipeline;
pub mod pod;
pub mod rom;
pub mod sampling;

pub use error::{Error, Result};
