use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Column-pivoted QR: `A Π = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub q: Matrix,
    /// `k × cols` upper triangular, `|R_kk|` nonincreasing.
    pub r: Matrix,
    /// `pivots[j]` is the original column placed at position `j`.
    pub pivots: Vec<usize>,
}

/// Householder reflector `I − τ v vᵀ` with `v[0] = 1`, acting on a trailing
/// block of rows starting at `start`.
struct Reflector {
    start: usize,
    v: Vec<f64>,
    tau: f64,
}

impl Reflector {
    /// Builds the reflector mapping `x` onto `beta e_1`; returns it with `beta`.
    fn new(start: usize, x: &[f64]) -> (Self, f64) {
        let alpha = x[0];
        let tail: f64 = x[1..].iter().map(|v| v * v).sum();
        if tail == 0.0 {
            let mut v = vec![0.0; x.len()];
            v[0] = 1.0;
            return (Reflector { start, v, tau: 0.0 }, alpha);
        }
        let norm = (alpha * alpha + tail).sqrt();
        let beta = if alpha >= 0.0 { -norm } else { norm };
        let v0 = alpha - beta;
        let mut v = Vec::with_capacity(x.len());
        v.push(1.0);
        v.extend(x[1..].iter().map(|e| e / v0));
        let tau = (beta - alpha) / beta;
        (Reflector { start, v, tau }, beta)
    }

    fn apply_to_column(&self, m: &mut Matrix, col: usize) {
        if self.tau == 0.0 {
            return;
        }
        let mut c = m.column_mut(col);
        let mut dot = 0.0;
        for (i, vi) in self.v.iter().enumerate() {
            dot += vi * c[self.start + i];
        }
        let s = self.tau * dot;
        for (i, vi) in self.v.iter().enumerate() {
            c[self.start + i] -= s * vi;
        }
    }
}

/// Householder QR with column pivoting on the largest remaining column norm.
///
/// Norm ties go to the lowest original column index.
pub fn qr_column_pivoted(a: &Matrix) -> Result<PivotedQr> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::invalid("pivoted QR of an empty matrix"));
    }
    let k = m.min(n);
    let mut work = a.clone();
    let mut pivots: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::with_capacity(k);

    for step in 0..k {
        // Exact recomputation keeps the choice independent of update history.
        let mut best = step;
        let mut best_norm = -1.0;
        for j in step..n {
            let norm: f64 = work.column(j).rows(step, m - step).norm_squared();
            if norm > best_norm || (norm == best_norm && pivots[j] < pivots[best]) {
                best = j;
                best_norm = norm;
            }
        }
        if best != step {
            work.swap_columns(step, best);
            pivots.swap(step, best);
        }
        let x: Vec<f64> = work.column(step).rows(step, m - step).iter().cloned().collect();
        let (h, beta) = Reflector::new(step, &x);
        work[(step, step)] = beta;
        for i in step + 1..m {
            work[(i, step)] = 0.0;
        }
        for j in step + 1..n {
            h.apply_to_column(&mut work, j);
        }
        reflectors.push(h);
    }

    let mut r = Matrix::zeros(k, n);
    for i in 0..k {
        for j in i..n {
            r[(i, j)] = work[(i, j)];
        }
    }
    let q = accumulate_q(&reflectors, m, k);
    Ok(PivotedQr { q, r, pivots })
}

fn accumulate_q(reflectors: &[Reflector], m: usize, k: usize) -> Matrix {
    let mut q = Matrix::identity(m, k);
    for h in reflectors.iter().rev() {
        for j in 0..k {
            h.apply_to_column(&mut q, j);
        }
    }
    q
}

/// LQ factorization of the independent rows of a matrix.
#[derive(Debug, Clone)]
pub struct Lq {
    /// `kept × kept` lower triangular.
    pub l: Matrix,
    /// `kept × cols` with orthonormal rows.
    pub q: Matrix,
    /// Original row indices retained, in order.
    pub kept_rows: Vec<usize>,
    /// Number of rows dropped as numerically dependent.
    pub dropped: usize,
}

/// Relative threshold below which a row is considered dependent on the
/// rows before it.
pub const LQ_DROP_TOLERANCE: f64 = 1e-12;

/// `A[kept, :] = L Q`. Rows whose component orthogonal to the previously
/// kept rows has norm `≤ 1e-12 · max row norm` are dropped.
pub fn lq(a: &Matrix) -> Result<Lq> {
    lq_with_tolerance(a, LQ_DROP_TOLERANCE)
}

/// [`lq`] with a caller-chosen relative drop threshold.
pub fn lq_with_tolerance(a: &Matrix, drop_tol: f64) -> Result<Lq> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::invalid("LQ of an empty matrix"));
    }
    // Work on Aᵀ so each constraint row is a contiguous column.
    let mut work = a.transpose();
    let max_norm = (0..m).map(|j| work.column(j).norm()).fold(0.0, f64::max);
    let threshold = drop_tol * max_norm;

    let mut reflectors: Vec<Reflector> = Vec::new();
    let mut kept_rows = Vec::new();
    let mut dropped = 0;
    for col in 0..m {
        for h in &reflectors {
            h.apply_to_column(&mut work, col);
        }
        let pos = reflectors.len();
        if pos >= n {
            dropped += 1;
            continue;
        }
        let tail_norm = work.column(col).rows(pos, n - pos).norm();
        if tail_norm <= threshold {
            dropped += 1;
            continue;
        }
        let x: Vec<f64> = work.column(col).rows(pos, n - pos).iter().cloned().collect();
        let (h, beta) = Reflector::new(pos, &x);
        work[(pos, col)] = beta;
        reflectors.push(h);
        kept_rows.push(col);
    }

    let k = kept_rows.len();
    let mut l = Matrix::zeros(k, k);
    for (i, &col) in kept_rows.iter().enumerate() {
        for j in 0..=i {
            l[(i, j)] = work[(j, col)];
        }
    }
    let q = accumulate_q(&reflectors, n, k).transpose();
    Ok(Lq { l, q, kept_rows, dropped })
}

/// Solves the upper-triangular system `R x = b` in place of `b`.
pub(crate) fn back_substitute(r: &Matrix, b: &mut Vector, n: usize) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= r[(i, j)] * b[j];
        }
        b[i] = s / r[(i, i)];
    }
}
