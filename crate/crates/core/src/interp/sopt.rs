use super::{check_sampler_input, ForceBasis, SampleIndexSet, SamplerKind};
use crate::error::Result;
use crate::numerics::{argmax_lowest, qr_column_pivoted, Matrix, Vector};

/// Relative size below which a triangular pivot counts as zero.
const SINGULAR_PIVOT: f64 = 1e-13;

/// S-measure `(sqrt(det(AᵀA)) / Π_k ‖A e_k‖)^{1/p}` of a `q × p` matrix.
///
/// Zero for a zero column or a numerically singular Gram matrix; 1 exactly
/// when the columns are orthogonal.
pub fn s_measure(a: &Matrix) -> f64 {
    let p = a.ncols();
    if p == 0 || a.nrows() < p {
        return 0.0;
    }
    let norms: Vec<f64> = (0..p).map(|k| a.column(k).norm()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    if norms.contains(&0.0) {
        return 0.0;
    }
    let Ok(qr) = qr_column_pivoted(a) else { return 0.0 };
    let mut log_ratio = 0.0;
    for k in 0..p {
        let d = qr.r[(k, k)].abs();
        if d <= SINGULAR_PIVOT * max_norm {
            return 0.0;
        }
        log_ratio += d.ln() - norms[k].ln();
    }
    (log_ratio / p as f64).exp().min(1.0)
}

/// Greedy S-optimal sampling.
///
/// While fewer than `r_f` rows are chosen, step `ℓ` picks the row that
/// maximizes the S-measure of the square matrix formed by the first `ℓ`
/// basis columns at the chosen rows plus the candidate. After that every
/// column takes part. Scores use rank-one determinant updates; a singular
/// current sample falls back to direct evaluation. Ties go to the lowest row.
pub fn sopt(xi: &ForceBasis, n_f: usize) -> Result<SampleIndexSet> {
    check_sampler_input(xi, n_f)?;
    let (n, r_f) = xi.basis.shape();
    let basis = &xi.basis;
    let mut chosen = vec![false; n];

    let (i1, _) = argmax_lowest((0..n).map(|i| (i, basis[(i, 0)].abs()))).expect("nonempty basis");
    let mut z = vec![i1];
    chosen[i1] = true;

    while z.len() < n_f {
        let l = z.len();
        let cols = (l + 1).min(r_f);
        let scores = if l < r_f { square_growth_scores(basis, &z, &chosen) } else { row_append_scores(basis, &z, &chosen) };
        let scores = scores.unwrap_or_else(|| direct_scores(basis, &z, &chosen, cols));
        let (i, _) = argmax_lowest(scores).expect("n_f ≤ N leaves a candidate");
        z.push(i);
        chosen[i] = true;
    }
    Ok(SampleIndexSet { indices: z, r_f, method: SamplerKind::Sopt })
}

/// Scores for adding row `i` and column `ℓ` to the square `ℓ × ℓ` sample.
///
/// With `A` the current sample, `a` the new column at the chosen rows,
/// `r`, `γ` the candidate row, `det [[A, a], [r, γ]] = det A · (γ − r A⁻¹ a)`.
fn square_growth_scores(basis: &Matrix, z: &[usize], chosen: &[bool]) -> Option<Vec<(usize, f64)>> {
    let l = z.len();
    let a = Matrix::from_fn(l, l, |p, q| basis[(z[p], q)]);
    let col = Vector::from_fn(l, |p, _| basis[(z[p], l)]);
    let c = a.clone().lu().solve(&col)?;
    if !c.iter().all(|v| v.is_finite()) {
        return None;
    }
    let col_norm2: Vec<f64> = (0..l).map(|k| a.column(k).norm_squared()).collect();
    let new_norm2 = col.norm_squared();
    let scores = (0..basis.nrows())
        .filter(|&i| !chosen[i])
        .map(|i| {
            let gamma = basis[(i, l)];
            let mut schur = gamma;
            let mut denom = new_norm2 + gamma * gamma;
            for k in 0..l {
                let rk = basis[(i, k)];
                schur -= rk * c[k];
                denom *= col_norm2[k] + rk * rk;
            }
            let s = if denom > 0.0 { schur.abs() / denom.sqrt() } else { 0.0 };
            (i, s)
        })
        .collect();
    Some(scores)
}

/// Scores for appending row `i` to a sample that already uses every column:
/// `det(AᵀA + r rᵀ) = det(AᵀA) (1 + rᵀ (AᵀA)⁻¹ r)`.
fn row_append_scores(basis: &Matrix, z: &[usize], chosen: &[bool]) -> Option<Vec<(usize, f64)>> {
    let p = basis.ncols();
    let a = Matrix::from_fn(z.len(), p, |q, k| basis[(z[q], k)]);
    let gram = a.transpose() * &a;
    let chol = gram.cholesky()?;
    let gram_inv = chol.inverse();
    let col_norm2: Vec<f64> = (0..p).map(|k| a.column(k).norm_squared()).collect();
    let scores = (0..basis.nrows())
        .filter(|&i| !chosen[i])
        .map(|i| {
            let r = basis.row(i).transpose();
            let quad = (&gram_inv * &r).dot(&r);
            let denom: f64 = (0..p).map(|k| col_norm2[k] + r[k] * r[k]).product();
            (i, if denom > 0.0 { (1.0 + quad) / denom } else { 0.0 })
        })
        .collect();
    Some(scores)
}

fn direct_scores(basis: &Matrix, z: &[usize], chosen: &[bool], cols: usize) -> Vec<(usize, f64)> {
    (0..basis.nrows())
        .filter(|&i| !chosen[i])
        .map(|i| {
            let rows: Vec<usize> = z.iter().cloned().chain(std::iter::once(i)).collect();
            let a = Matrix::from_fn(rows.len(), cols, |p, q| basis[(rows[p], q)]);
            (i, s_measure(&a))
        })
        .collect()
}
