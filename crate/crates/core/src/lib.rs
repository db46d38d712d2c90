//! Projection-based reduced-order modeling with hyper-reduction.
//!
//! The crate covers the full offline/online pipeline: snapshot collection on
//! nonlinear finite-element models, POD bases, interpolation hyper-reduction
//! (oversampled DEIM, GappyPOD+E, S-OPT), empirical quadrature (EQP) via
//! nonnegative least squares, Galerkin ROM integration, and Pareto analysis
//! of accuracy against online cost.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod eqp;
pub mod error;
pub mod fom;
pub mod harness;
pub mod interp;
pub mod numerics;
pub mod pod;
pub mod rom;

pub use error::{Error, Result};
