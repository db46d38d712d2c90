use super::{check_sampler_input, ForceBasis, SampleIndexSet, SamplerKind};
use crate::error::Result;
use crate::numerics::{argmax_lowest, qr_column_pivoted, thin_svd};

/// GappyPOD+E: Q-DEIM initialization from the pivoted QR of `Ξᵀ`, then
/// greedy oversampling that maximizes a lower bound on the smallest singular
/// value of the sampled basis.
pub fn gappypod_e(xi: &ForceBasis, n_f: usize) -> Result<SampleIndexSet> {
    check_sampler_input(xi, n_f)?;
    let (n, r_f) = xi.basis.shape();
    let qr = qr_column_pivoted(&xi.basis.transpose())?;
    let mut z: Vec<usize> = qr.pivots[..r_f].to_vec();
    let mut chosen = vec![false; n];
    for &i in &z {
        chosen[i] = true;
    }

    while z.len() < n_f {
        let sampled = xi.sampled(&z);
        let svd = thin_svd(&sampled)?;
        let s = &svd.sigma;
        // g = σ_{r−1}² − σ_r², zero for a single-column basis
        let g = if r_f >= 2 { (s[r_f - 2] * s[r_f - 2] - s[r_f - 1] * s[r_f - 1]).max(0.0) } else { 0.0 };
        // W = Vᵀ Ξᵀ, column i is Vᵀ (row i of Ξ)ᵀ
        let w = svd.v.transpose() * xi.basis.transpose();
        let gain = |i: usize| {
            let col = w.column(i);
            let y = col.norm_squared();
            let last = col[r_f - 1];
            let gy = g + y;
            gy - (gy * gy - 4.0 * g * last * last).max(0.0).sqrt()
        };
        let (i, _) = argmax_lowest((0..n).filter(|&i| !chosen[i]).map(|i| (i, gain(i))))
            .expect("n_f ≤ N leaves a candidate");
        z.push(i);
        chosen[i] = true;
    }
    Ok(SampleIndexSet { indices: z, r_f, method: SamplerKind::QdeimE })
}
