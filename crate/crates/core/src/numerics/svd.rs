use super::{ensure_finite_matrix, Matrix, Vector};
use crate::error::{Error, Result};

/// Relative singular-value cutoff used by [`pseudoinverse`] callers that have
/// no better information.
pub const DEFAULT_PINV_CUTOFF: f64 = 1e-12;

/// Thin singular value decomposition `A = U diag(sigma) Vᵀ`.
///
/// `sigma` is sorted nonincreasing and `U`, `V` carry `min(rows, cols)`
/// orthonormal columns.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

impl ThinSvd {
    pub fn rank(&self, cutoff: f64) -> usize {
        let smax = self.sigma.iter().cloned().fold(0.0, f64::max);
        self.sigma.iter().filter(|&&s| s > cutoff * smax && s > 0.0).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn thin_svd(a: &Matrix) -> Result<ThinSvd> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid("SVD of an empty matrix"));
    }
    ensure_finite_matrix(a, "SVD input")?;

    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });

    let mut su = Matrix::zeros(a.nrows(), k);
    let mut sv = Matrix::zeros(a.ncols(), k);
    let mut sigma = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = svd.singular_values[src].max(0.0);
        su.set_column(dst, &u.column(src));
        sv.set_column(dst, &vt.row(src).transpose());
    }
    Ok(ThinSvd { u: su, sigma, v: sv })
}

/// Moore–Penrose pseudoinverse. Singular values `≤ cutoff · σ_max` are
/// treated as zero.
pub fn pseudoinverse(a: &Matrix, cutoff: f64) -> Result<Matrix> {
    if !(cutoff >= 0.0) {
        return Err(Error::invalid(format!("pseudoinverse cutoff {cutoff} must be ≥ 0")));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Matrix::zeros(a.ncols(), a.nrows()));
    }
    let svd = thin_svd(a)?;
    let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
    let mut vs = svd.v.clone();
    for (j, &s) in svd.sigma.iter().enumerate() {
        let inv = if s > cutoff * smax && s > 0.0 { 1.0 / s } else { 0.0 };
        vs.column_mut(j).scale_mut(inv);
    }
    Ok(vs * svd.u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_defect(q: &Matrix) -> f64 {
        let g = q.transpose() * q;
        (g - Matrix::identity(q.ncols(), q.ncols())).abs().max()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let svd = thin_svd(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(svd.sigma.as_slice(), &[1.0, 1.0, 1.0]);
        let prod = svd.u.transpose() * &svd.v;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)].abs(), expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_sorted() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let svd = thin_svd(&a).unwrap();
        assert_relative_eq!(svd.sigma[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(svd.sigma[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn reconstruction_random_rectangular() {
        for (r, c, seed) in [(6, 4, 1), (4, 6, 2), (64, 64, 3), (60, 20, 4)] {
            let a = random(r, c, seed);
            let svd = thin_svd(&a).unwrap();
            assert_eq!(svd.sigma.len(), r.min(c));
            let rel = (svd.reconstruct() - &a).norm() / a.norm();
            assert!(rel <= 1e-12, "{r}x{c}: {rel}");
            assert!(orthonormality_defect(&svd.u) <= 1e-12);
            assert!(orthonormality_defect(&svd.v) <= 1e-12);
            assert!(svd.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = Matrix::zeros(2, 2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(thin_svd(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn pinv_diagonal_and_zero() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let p = pseudoinverse(&a, DEFAULT_PINV_CUTOFF).unwrap();
        assert_relative_eq!(p, Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]), epsilon = 1e-15);
        let z = pseudoinverse(&Matrix::zeros(2, 2), DEFAULT_PINV_CUTOFF).unwrap();
        assert_eq!(z, Matrix::zeros(2, 2));
    }

    #[test]
    fn pinv_penrose_identities() {
        let a = random(5, 3, 7);
        let p = pseudoinverse(&a, DEFAULT_PINV_CUTOFF).unwrap();
        assert!((&p * &a - Matrix::identity(3, 3)).abs().max() <= 1e-10);
        assert!((&a * &p * &a - &a).abs().max() <= 1e-10);
        assert!((&p * &a * &p - &p).abs().max() <= 1e-10);
        let ap = &a * &p;
        assert!((&ap - ap.transpose()).abs().max() <= 1e-10);
        let pa = &p * &a;
        assert!((&pa - pa.transpose()).abs().max() <= 1e-10);
        let back = pseudoinverse(&p, DEFAULT_PINV_CUTOFF).unwrap();
        assert!((back - a).abs().max() <= 1e-8);
    }
}
