//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use hyperred::interp::ForceBasis;
use hyperred::numerics::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Orthonormal basis from nalgebra's Householder QR of a random matrix.
pub fn random_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> ForceBasis {
    let q = random_matrix(rng, n, r).qr().q();
    ForceBasis::new(q, Vector::from_element(r, 1.0))
}

/// Smallest NNLS residual over every support of linearly independent columns.
/// Some optimal solution always has such a support.
pub fn nnls_brute_force(a: &Matrix, b: &Vector) -> f64 {
    let (m, n) = a.shape();
    let mut best = b.norm();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        if cols.len() > m {
            continue;
        }
        let sub = a.select_columns(&cols);
        let svd = sub.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
            continue;
        }
        let Ok(x) = svd.solve(b, 0.0) else { continue };
        if x.iter().any(|&v| v < 0.0) {
            continue;
        }
        best = best.min((b - &sub * x).norm());
    }
    best
}

/// S-measure from the Gram determinant.
pub fn s_measure_direct(a: &Matrix) -> f64 {
    let p = a.ncols();
    let det = (a.transpose() * a).determinant().max(0.0);
    let norms: f64 = (0..p).map(|k| a.column(k).norm()).product();
    if norms == 0.0 {
        return 0.0;
    }
    (det.sqrt() / norms).powf(1.0 / p as f64)
}

/// Checks a greedy S-optimal index sequence against a step-wise exhaustive
/// argmax. Returns the number of steps where the greedy pick differed from
/// the lowest-index maximizer only through a numerical tie.
pub fn check_sopt_sequence(basis: &Matrix, z: &[usize]) -> Result<usize, String> {
    let (n, r_f) = basis.shape();
    let first = (0..n).fold(0, |best, i| if basis[(i, 0)].abs() > basis[(best, 0)].abs() { i } else { best });
    if z[0] != first {
        return Err(format!("first index {} but largest |entry| is at {first}", z[0]));
    }
    let mut ties = 0;
    for l in 1..z.len() {
        let cols = (l + 1).min(r_f);
        let score = |i: usize| {
            let rows: Vec<usize> = z[..l].iter().cloned().chain(std::iter::once(i)).collect();
            s_measure_direct(&Matrix::from_fn(l + 1, cols, |p, q| basis[(rows[p], q)]))
        };
        let scores: Vec<(usize, f64)> = (0..n).filter(|i| !z[..l].contains(i)).map(|i| (i, score(i))).collect();
        let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * max.abs().max(1e-300);
        let oracle = scores.iter().find(|s| s.1 >= max - tol).expect("candidate").0;
        let picked = score(z[l]);
        if picked < max - tol {
            return Err(format!("step {l}: picked {} with S = {picked:.15} but {oracle} reaches {max:.15}", z[l]));
        }
        if z[l] != oracle {
            ties += 1;
        }
    }
    Ok(ties)
}

/// Oblique projection quantities computed directly with nalgebra's SVD.
pub struct ProjectionCheck {
    pub error: f64,
    pub bound: f64,
    pub orthogonal_error: f64,
    pub epsilon_norm: f64,
}

pub fn projection_check(xi: &Matrix, z: &[usize], f: &Vector) -> ProjectionCheck {
    let zx = xi.select_rows(z);
    let pinv = zx.clone().pseudo_inverse(1e-12).expect("pseudo-inverse");
    let fz = Vector::from_iterator(z.len(), z.iter().map(|&i| f[i]));
    let error = (f - xi * (&pinv * fz)).norm();
    let perp = f - xi * (xi.transpose() * f);
    let perp_z = Vector::from_iterator(z.len(), z.iter().map(|&i| perp[i]));
    let pinv_norm = pinv.clone().svd(false, false).singular_values.max();
    ProjectionCheck { error, bound: pinv_norm * perp.norm(), orthogonal_error: perp.norm(), epsilon_norm: (&pinv * perp_z).norm() }
}

/// Non-dominated indices by exhaustive pairwise comparison, sorted.
pub fn pareto_brute_force(points: &[(f64, f64)]) -> Vec<usize> {
    let finite = |p: &(f64, f64)| p.0.is_finite() && p.1.is_finite();
    (0..points.len())
        .filter(|&i| finite(&points[i]))
        .filter(|&i| {
            let p = points[i];
            !points.iter().any(|q| finite(q) && q.0 <= p.0 && q.1 <= p.1 && (q.0 < p.0 || q.1 < p.1))
        })
        .collect()
}
