//! Dense linear-algebra kernels shared by every stage of the pipeline.
//!
//! Matrices and vectors are plain `nalgebra` dynamic types. All routines are
//! pure functions of their inputs.

mod nnls;
mod qr;
mod svd;

pub use nnls::{nnls_lawson_hanson, NnlsOptions, NnlsSolution, NnlsStop, DEFAULT_DUAL_TOL};
pub use qr::{lq, lq_with_tolerance, qr_column_pivoted, Lq, PivotedQr, LQ_DROP_TOLERANCE};
pub use svd::{pseudoinverse, thin_svd, ThinSvd, DEFAULT_PINV_CUTOFF};

use crate::error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

pub(crate) fn ensure_finite_matrix(a: &Matrix, what: &str) -> Result<()> {
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % a.nrows(), pos / a.nrows());
        return Err(Error::NonFinite(format!("{what} entry ({r}, {c})")));
    }
    Ok(())
}

pub(crate) fn ensure_finite_vector(v: &Vector, what: &str) -> Result<()> {
    if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{what} entry {pos}")));
    }
    Ok(())
}

/// Index of the largest value, ties resolved to the lowest index.
pub(crate) fn argmax_lowest<I>(values: I) -> Option<(usize, f64)>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best
}
