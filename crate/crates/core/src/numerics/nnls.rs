use super::qr::back_substitute;
use super::{argmax_lowest, Matrix, Vector};
use crate::error::{Error, Result};

/// Options for [`nnls_lawson_hanson`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    /// Relative residual tolerance.
    pub tol: f64,
    /// Relative dual (optimality) tolerance, kept tight so a loose residual
    /// target does not stop the solver short of a reachable fit.
    pub dual_tol: f64,
    /// Outer-iteration limit; `None` means three times the column count.
    pub max_iter: Option<usize>,
    /// Stop once the passive set holds this many columns.
    pub max_passive: Option<usize>,
}

impl NnlsOptions {
    pub fn with_tol(tol: f64) -> Self {
        NnlsOptions { tol, dual_tol: DEFAULT_DUAL_TOL, max_iter: None, max_passive: None }
    }
}

/// Default for [`NnlsOptions::dual_tol`].
pub const DEFAULT_DUAL_TOL: f64 = 1e-12;

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NnlsStop {
    /// `‖b − Ax‖₂ ≤ tol · ‖b‖₂`.
    Residual,
    /// No inactive column has dual value above `dual_tol · ‖Aᵀb‖_∞`.
    Dual,
    /// Passive-set cap reached.
    Capped,
    /// Iteration budget exhausted.
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Vector,
    /// `‖b − Ax‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub stop: NnlsStop,
    /// Largest dual value over inactive columns at exit.
    pub dual_max: f64,
}

impl NnlsSolution {
    pub fn converged(&self) -> bool {
        matches!(self.stop, NnlsStop::Residual | NnlsStop::Dual)
    }

    pub fn support(&self) -> Vec<usize> {
        self.x.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect()
    }
}

/// QR factorization of the passive columns, updated one column at a time
/// with Givens rotations.
struct PassiveQr {
    m: usize,
    /// Full `m × m` orthogonal factor.
    q: Matrix,
    /// Upper-triangular factor; column `p` belongs to `cols[p]`.
    r: Matrix,
    qtb: Vector,
    cols: Vec<usize>,
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

impl PassiveQr {
    fn new(m: usize, capacity: usize, b: &Vector) -> Self {
        PassiveQr {
            m,
            q: Matrix::identity(m, m),
            r: Matrix::zeros(m, capacity.max(1)),
            qtb: b.clone(),
            cols: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.cols.len()
    }

    /// Rotates rows `i`, `i + 1` of every tracked quantity.
    fn rotate(&mut self, i: usize, c: f64, s: f64, r_from: usize) {
        let p = self.len();
        for j in r_from..p {
            let (a, b) = (self.r[(i, j)], self.r[(i + 1, j)]);
            self.r[(i, j)] = c * a + s * b;
            self.r[(i + 1, j)] = -s * a + c * b;
        }
        let (a, b) = (self.qtb[i], self.qtb[i + 1]);
        self.qtb[i] = c * a + s * b;
        self.qtb[i + 1] = -s * a + c * b;
        for k in 0..self.m {
            let (a, b) = (self.q[(k, i)], self.q[(k, i + 1)]);
            self.q[(k, i)] = c * a + s * b;
            self.q[(k, i + 1)] = -s * a + c * b;
        }
    }

    /// Appends column `j`; returns the new diagonal entry.
    fn push(&mut self, a: &Matrix, j: usize) -> f64 {
        let p = self.len();
        let w = self.q.transpose() * a.column(j);
        let mut w: Vec<f64> = w.iter().cloned().collect();
        for i in (p + 1..self.m).rev() {
            let (c, s) = givens(w[i - 1], w[i]);
            if s == 0.0 {
                continue;
            }
            w[i - 1] = c * w[i - 1] + s * w[i];
            w[i] = 0.0;
            // existing R columns are zero below row p, so only q and qtb move
            let (a0, b0) = (self.qtb[i - 1], self.qtb[i]);
            self.qtb[i - 1] = c * a0 + s * b0;
            self.qtb[i] = -s * a0 + c * b0;
            for k in 0..self.m {
                let (x, y) = (self.q[(k, i - 1)], self.q[(k, i)]);
                self.q[(k, i - 1)] = c * x + s * y;
                self.q[(k, i)] = -s * x + c * y;
            }
        }
        if self.r.ncols() <= p {
            self.r = self.r.clone().resize_horizontally(2 * p + 1, 0.0);
        }
        for i in 0..=p.min(self.m - 1) {
            self.r[(i, p)] = w[i];
        }
        self.cols.push(j);
        w[p]
    }

    /// Removes the passive column at position `pos` and retriangularizes.
    fn remove(&mut self, pos: usize) {
        let p = self.len();
        for j in pos..p - 1 {
            for i in 0..self.m {
                self.r[(i, j)] = self.r[(i, j + 1)];
            }
        }
        for i in 0..self.m {
            self.r[(i, p - 1)] = 0.0;
        }
        self.cols.remove(pos);
        let p = p - 1;
        for i in pos..p {
            let (c, s) = givens(self.r[(i, i)], self.r[(i + 1, i)]);
            if s != 0.0 {
                self.rotate(i, c, s, i);
            }
            self.r[(i + 1, i)] = 0.0;
        }
    }

    fn solve(&self) -> Vector {
        let p = self.len();
        let mut z = Vector::from_iterator(p, self.qtb.iter().take(p).cloned());
        back_substitute(&self.r, &mut z, p);
        z
    }
}

/// Lawson–Hanson active-set solver for `min ‖Ax − b‖₂` subject to `x ≥ 0`.
///
/// Entering columns are chosen by the largest dual value `Aᵀ(b − Ax)`, ties
/// broken toward the lowest index. The passive-set least-squares problems are
/// solved from an incrementally updated QR factorization.
pub fn nnls_lawson_hanson(a: &Matrix, b: &Vector, opts: &NnlsOptions) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if m != b.len() {
        return Err(Error::dim(format!("NNLS: A has {m} rows but b has length {}", b.len())));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("NNLS tolerance {} must be > 0", opts.tol)));
    }
    let max_iter = opts.max_iter.unwrap_or(3 * n);
    let cap = opts.max_passive.unwrap_or(usize::MAX).min(m).min(n);

    let mut x = Vector::zeros(n);
    let b_norm = b.norm();
    let atb_inf = (a.transpose() * b).amax();
    let mut residual_vec = b.clone();
    let mut passive = vec![false; n];
    let mut qr = PassiveQr::new(m, cap.min(64), b);
    let mut iterations = 0;

    let finish = |x: Vector, r: &Vector, dual_max: f64, iterations: usize, stop: NnlsStop| NnlsSolution {
        residual: r.norm(),
        x,
        iterations,
        stop,
        dual_max,
    };

    if n == 0 || b_norm == 0.0 {
        return Ok(finish(x, &residual_vec, 0.0, 0, NnlsStop::Residual));
    }

    loop {
        let dual = a.transpose() * &residual_vec;
        let dual_max = (0..n).filter(|&j| !passive[j]).map(|j| dual[j]).fold(0.0, f64::max);
        if residual_vec.norm() <= opts.tol * b_norm {
            return Ok(finish(x, &residual_vec, dual_max, iterations, NnlsStop::Residual));
        }
        if dual_max <= opts.dual_tol * atb_inf {
            return Ok(finish(x, &residual_vec, dual_max, iterations, NnlsStop::Dual));
        }
        if qr.len() >= cap {
            let stop = if qr.len() >= m || qr.len() >= n { NnlsStop::Dual } else { NnlsStop::Capped };
            return Ok(finish(x, &residual_vec, dual_max, iterations, stop));
        }
        if iterations >= max_iter {
            return Ok(finish(x, &residual_vec, dual_max, iterations, NnlsStop::MaxIter));
        }

        // Select the entering column; skip candidates that are numerically
        // dependent on the passive set or would enter with a nonpositive value.
        let mut rejected = vec![false; n];
        let mut entered = None;
        loop {
            let candidate = argmax_lowest(
                (0..n).filter(|&j| !passive[j] && !rejected[j] && dual[j] > opts.dual_tol * atb_inf).map(|j| (j, dual[j])),
            );
            let Some((j, _)) = candidate else { break };
            let col_norm = a.column(j).norm();
            let diag = qr.push(a, j);
            let z = qr.solve();
            if diag.abs() <= 1e-12 * col_norm.max(f64::MIN_POSITIVE) || !(z[z.len() - 1] > 0.0) {
                qr.remove(qr.len() - 1);
                rejected[j] = true;
                continue;
            }
            entered = Some(j);
            break;
        }
        let Some(j) = entered else {
            return Ok(finish(x, &residual_vec, dual_max, iterations, NnlsStop::Dual));
        };
        passive[j] = true;
        iterations += 1;

        loop {
            let z = qr.solve();
            if z.iter().all(|&v| v > 0.0) {
                for (pos, &col) in qr.cols.iter().enumerate() {
                    x[col] = z[pos];
                }
                break;
            }
            // Step toward z until the first passive variable hits zero.
            let mut alpha = f64::INFINITY;
            let mut blocking = 0;
            for (pos, &col) in qr.cols.iter().enumerate() {
                if z[pos] <= 0.0 {
                    let t = x[col] / (x[col] - z[pos]);
                    if t < alpha {
                        alpha = t;
                        blocking = pos;
                    }
                }
            }
            for (pos, &col) in qr.cols.iter().enumerate() {
                x[col] += alpha * (z[pos] - x[col]);
            }
            let blocking_col = qr.cols[blocking];
            x[blocking_col] = 0.0;
            let mut pos = qr.len();
            while pos > 0 {
                pos -= 1;
                let col = qr.cols[pos];
                if x[col] <= 0.0 {
                    x[col] = 0.0;
                    passive[col] = false;
                    qr.remove(pos);
                }
            }
            if qr.len() == 0 {
                break;
            }
        }

        residual_vec = b - a * &x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts() -> NnlsOptions {
        NnlsOptions::with_tol(1e-12)
    }

    #[test]
    fn identity_system() {
        let a = Matrix::identity(2, 2);
        let b = Vector::from_vec(vec![2.0, 3.0]);
        let s = nnls_lawson_hanson(&a, &b, &opts()).unwrap();
        assert_relative_eq!(s.x, b, epsilon = 1e-15);
        assert!(s.residual <= 1e-15);
        assert!(s.converged());
    }

    #[test]
    fn nonnegativity_forces_zero() {
        let a = Matrix::from_element(1, 1, 1.0);
        let b = Vector::from_element(1, -1.0);
        let s = nnls_lawson_hanson(&a, &b, &opts()).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert_relative_eq!(s.residual, 1.0);
    }

    #[test]
    fn tie_enters_lowest_index() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = Vector::from_element(1, 1.0);
        let s = nnls_lawson_hanson(&a, &b, &opts()).unwrap();
        assert_eq!(s.x.as_slice(), &[1.0, 0.0]);
        assert!(s.residual <= 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = Matrix::zeros(2, 2);
        let b = Vector::zeros(3);
        assert!(nnls_lawson_hanson(&a, &b, &opts()).is_err());
        assert!(nnls_lawson_hanson(&a, &Vector::zeros(2), &NnlsOptions::with_tol(0.0)).is_err());
    }

    #[test]
    fn passive_cap_stops_early() {
        let a = Matrix::identity(4, 4);
        let b = Vector::from_vec(vec![4.0, 3.0, 2.0, 1.0]);
        let o = NnlsOptions { max_passive: Some(2), ..opts() };
        let s = nnls_lawson_hanson(&a, &b, &o).unwrap();
        assert_eq!(s.stop, NnlsStop::Capped);
        assert_eq!(s.support(), vec![0, 1]);
    }

    #[test]
    fn max_iter_flags_non_convergence() {
        let a = Matrix::identity(3, 3);
        let b = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let o = NnlsOptions { max_iter: Some(1), ..opts() };
        let s = nnls_lawson_hanson(&a, &b, &o).unwrap();
        assert_eq!(s.stop, NnlsStop::MaxIter);
        assert!(!s.converged());
        assert!(s.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn removal_path_keeps_feasibility() {
        // Both columns enter, then the first must leave.
        let a = Matrix::from_row_slice(3, 3, &[1.0, 0.9, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 0.1]);
        let b = Vector::from_vec(vec![0.2, 1.0, 0.0]);
        let s = nnls_lawson_hanson(&a, &b, &opts()).unwrap();
        assert!(s.x.iter().all(|&v| v >= 0.0));
        let g = a.transpose() * (&b - &a * &s.x);
        for j in 0..3 {
            if s.x[j] > 0.0 {
                assert!(g[j].abs() <= 1e-10);
            } else {
                assert!(g[j] <= 1e-10);
            }
        }
    }
}
