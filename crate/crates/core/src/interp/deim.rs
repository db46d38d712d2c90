use super::{check_sampler_input, ForceBasis, SampleIndexSet, SamplerKind};
use crate::error::Result;
use crate::numerics::{argmax_lowest, pseudoinverse, Matrix, Vector, DEFAULT_PINV_CUTOFF};

/// One greedy selection of the oversampled DEIM loop.
#[derive(Debug, Clone)]
pub struct DeimStep {
    /// Basis column whose residual drove the choice.
    pub column: usize,
    pub chosen: usize,
    /// Residual `ξ_j − ε` over all rows at the time of the choice.
    pub residual: Vector,
}

/// Oversampled DEIM: the first index maximizes `|Ξ_{i,1}|`, then each later
/// basis column contributes up to `ceil((n_f − 1)/(r_f − 1))` indices that
/// maximize the gappy reconstruction residual of that column.
pub fn deim_oversampled(xi: &ForceBasis, n_f: usize) -> Result<SampleIndexSet> {
    deim_oversampled_traced(xi, n_f).map(|(z, _)| z)
}

pub fn deim_oversampled_traced(xi: &ForceBasis, n_f: usize) -> Result<(SampleIndexSet, Vec<DeimStep>)> {
    check_sampler_input(xi, n_f)?;
    let (n, r_f) = xi.basis.shape();
    let mut chosen = vec![false; n];
    let mut z = Vec::with_capacity(n_f);
    let mut trace = Vec::new();

    let first: Vector = xi.basis.column(0).into_owned();
    let (i1, _) = argmax_lowest((0..n).map(|i| (i, first[i].abs()))).expect("nonempty basis");
    z.push(i1);
    chosen[i1] = true;
    trace.push(DeimStep { column: 0, chosen: i1, residual: first.clone() });

    let done = |z: &Vec<usize>, trace: Vec<DeimStep>| {
        (SampleIndexSet { indices: z.clone(), r_f, method: SamplerKind::Deim }, trace)
    };
    if z.len() == n_f {
        return Ok(done(&z, trace));
    }

    if r_f == 1 {
        // No earlier columns to reconstruct from: the residual is the column.
        while z.len() < n_f {
            let (i, _) = argmax_lowest((0..n).filter(|&i| !chosen[i]).map(|i| (i, first[i].abs())))
                .expect("n_f ≤ N leaves a candidate");
            z.push(i);
            chosen[i] = true;
            trace.push(DeimStep { column: 0, chosen: i, residual: first.clone() });
        }
        return Ok(done(&z, trace));
    }

    let n_iter = (n_f - 1).div_ceil(r_f - 1);
    for j in 1..r_f {
        let prev = xi.basis.columns(0, j).into_owned();
        let target: Vector = xi.basis.column(j).into_owned();
        for _ in 0..n_iter {
            let sampled = Matrix::from_fn(z.len(), j, |a, b| prev[(z[a], b)]);
            let target_z = Vector::from_iterator(z.len(), z.iter().map(|&i| target[i]));
            let coeffs = pseudoinverse(&sampled, DEFAULT_PINV_CUTOFF)? * target_z;
            let residual = &target - &prev * coeffs;
            let (i, _) = argmax_lowest((0..n).filter(|&i| !chosen[i]).map(|i| (i, residual[i].abs())))
                .expect("n_f ≤ N leaves a candidate");
            z.push(i);
            chosen[i] = true;
            trace.push(DeimStep { column: j, chosen: i, residual });
            if z.len() == n_f {
                return Ok(done(&z, trace));
            }
        }
    }
    Ok(done(&z, trace))
}
