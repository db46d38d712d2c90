//! Empirical quadrature: sparse nonnegative reweighting of the full
//! quadrature rule, fitted so that the reduced force is reproduced on the
//! training snapshots.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::FomProblem;
pub use crate::fom::FullQuadratureRule;
use crate::numerics::{ensure_finite_matrix, lq_with_tolerance, nnls_lawson_hanson, Matrix, NnlsOptions, NnlsStop, Vector};
use crate::pod::{ReducedBasis, SnapshotMatrix};

/// Default relative NNLS tolerance.
pub const DEFAULT_EQP_TOL: f64 = 1e-4;

/// Relative threshold below which a rescaled constraint row counts as
/// dependent on the rows before it. Kept rows then have `cond(L) ≲ 1e8`, so
/// forming `L⁻¹ D rhs` loses at most about eight digits.
pub const CONSTRAINT_DROP_TOLERANCE: f64 = 1e-8;

/// Accuracy constraints `G ρ* ≈ G ρ`, one row per (snapshot, test vector).
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    pub data: Matrix,
    /// `(snapshot index, reduced test index)` for each row; row
    /// `j + s·r_y` belongs to the `s`-th selected snapshot.
    pub row_meta: Vec<(usize, usize)>,
    pub rhs: Vector,
}

/// Assembles `G_ik = η(y(t_s), ψ_j, t_s, x_k)` for the selected snapshots.
pub fn assemble_constraints(fom: &FomProblem, psi: &ReducedBasis, snapshots: &SnapshotMatrix, selected_times: &[usize]) -> Result<ConstraintMatrix> {
    if psi.full_dim() != fom.state_dim || snapshots.state_dim() != fom.state_dim {
        return Err(Error::dim("basis or snapshots differ from the problem dimension"));
    }
    if selected_times.is_empty() {
        return Err(Error::invalid("no snapshots selected for EQP constraints"));
    }
    if let Some(&bad) = selected_times.iter().find(|&&s| s >= snapshots.n_snapshots()) {
        return Err(Error::invalid(format!("snapshot index {bad} out of range")));
    }
    let r = psi.dim();
    let k_points = fom.n_points();
    let mut data = Matrix::zeros(selected_times.len() * r, k_points);
    let mut row_meta = Vec::with_capacity(data.nrows());
    for (s_local, &s) in selected_times.iter().enumerate() {
        let state = snapshots.state(s);
        let t = snapshots.time_stamps[s];
        for k in 0..k_points {
            let c = fom.eval_integrand_contracted(&state, t, k, &psi.basis)?;
            if let Some(j) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "integrand at snapshot {s}, point {k} (element {}), test vector {j}",
                    fom.point_element(k)
                )));
            }
            data.view_mut((s_local * r, k), (r, 1)).copy_from(&c);
        }
        row_meta.extend((0..r).map(|j| (s, j)));
    }
    let rhs = &data * &fom.quadrature.weights;
    Ok(ConstraintMatrix { data, row_meta, rhs })
}

/// Record of the transform applied by [`condition_constraints`].
#[derive(Debug, Clone)]
pub struct ConditioningReport {
    /// Row scale `1 / max|G_i·|`, zero for dropped zero rows.
    pub row_scale: Vector,
    pub zero_rows_dropped: usize,
    pub dependent_rows_dropped: usize,
    /// Rows of `G` (original indexing) represented in the conditioned system.
    pub kept_rows: Vec<usize>,
    /// Lower-triangular factor of the rescaled kept rows.
    pub l: Matrix,
}

/// Row max-abs scaling followed by an LQ factorization. Returns `Q` as the
/// conditioned constraint matrix and `L⁻¹ D rhs` as its right-hand side.
pub fn condition_constraints(g: &ConstraintMatrix) -> Result<(Matrix, Vector, ConditioningReport)> {
    let (m, k) = g.data.shape();
    if m == 0 || k == 0 {
        return Err(Error::invalid("empty constraint matrix"));
    }
    ensure_finite_matrix(&g.data, "constraint matrix")?;
    let mut row_scale = Vector::zeros(m);
    let mut nonzero = Vec::new();
    for i in 0..m {
        let max = g.data.row(i).amax();
        if max > 0.0 {
            row_scale[i] = 1.0 / max;
            nonzero.push(i);
        }
    }
    let zero_rows_dropped = m - nonzero.len();
    if nonzero.is_empty() {
        return Err(Error::invalid("every constraint row is zero"));
    }
    let scaled = Matrix::from_fn(nonzero.len(), k, |i, j| g.data[(nonzero[i], j)] * row_scale[nonzero[i]]);
    let scaled_rhs = Vector::from_fn(nonzero.len(), |i, _| g.rhs[nonzero[i]] * row_scale[nonzero[i]]);
    let f = lq_with_tolerance(&scaled, CONSTRAINT_DROP_TOLERANCE)?;
    let kept_rhs = Vector::from_iterator(f.kept_rows.len(), f.kept_rows.iter().map(|&i| scaled_rhs[i]));
    let rhs_c = f
        .l
        .solve_lower_triangular(&kept_rhs)
        .ok_or_else(|| Error::Singular("LQ factor of the constraint matrix".into()))?;
    let report = ConditioningReport {
        row_scale,
        zero_rows_dropped,
        dependent_rows_dropped: f.dropped,
        kept_rows: f.kept_rows.iter().map(|&i| nonzero[i]).collect(),
        l: f.l,
    };
    Ok((f.q, rhs_c, report))
}

/// Sparse nonnegative quadrature rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseRuleFile", into = "SparseRuleFile")]
pub struct SparseQuadratureRule {
    /// Length `K`, zero off the support.
    pub weights: Vector,
    pub support: Vec<usize>,
    pub k_star: usize,
    /// `‖Gc ρ* − rhs_c‖ / ‖rhs_c‖`.
    pub achieved_residual: f64,
    pub tolerance_used: f64,
    pub stop: Option<NnlsStop>,
}

impl SparseQuadratureRule {
    /// The full rule written as a (non-sparse) rule.
    pub fn full(full: &FullQuadratureRule) -> Self {
        Self::from_weights(full.weights.clone(), 0.0, 0.0, None)
    }

    pub fn from_weights(weights: Vector, achieved_residual: f64, tolerance_used: f64, stop: Option<NnlsStop>) -> Self {
        let support: Vec<usize> = weights.iter().enumerate().filter(|(_, &w)| w != 0.0).map(|(k, _)| k).collect();
        SparseQuadratureRule { k_star: support.len(), weights, support, achieved_residual, tolerance_used, stop }
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn support_weights(&self) -> Vec<f64> {
        self.support.iter().map(|&k| self.weights[k]).collect()
    }
}

/// On-disk layout: weights are listed alongside the support only.
#[derive(Serialize, Deserialize)]
struct SparseRuleFile {
    #[serde(rename = "K")]
    k: usize,
    support: Vec<usize>,
    weights: Vec<f64>,
    tol: f64,
    residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stop: Option<NnlsStop>,
}

impl From<SparseQuadratureRule> for SparseRuleFile {
    fn from(r: SparseQuadratureRule) -> Self {
        SparseRuleFile {
            k: r.n_points(),
            weights: r.support_weights(),
            support: r.support,
            tol: r.tolerance_used,
            residual: r.achieved_residual,
            stop: r.stop,
        }
    }
}

impl TryFrom<SparseRuleFile> for SparseQuadratureRule {
    type Error = String;

    fn try_from(f: SparseRuleFile) -> std::result::Result<Self, String> {
        if f.support.len() != f.weights.len() {
            return Err(format!("{} support points but {} weights", f.support.len(), f.weights.len()));
        }
        let mut weights = Vector::zeros(f.k);
        let mut last = None;
        for (&k, &w) in f.support.iter().zip(&f.weights) {
            if k >= f.k || last.is_some_and(|l| k <= l) {
                return Err(format!("support must be increasing and below K = {}", f.k));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(format!("weight {w} at point {k} is not positive"));
            }
            weights[k] = w;
            last = Some(k);
        }
        Ok(SparseQuadratureRule::from_weights(weights, f.residual, f.tol, f.stop))
    }
}

/// Solves `min ‖Gc ρ − rhs_c‖` over `ρ ≥ 0` by Lawson–Hanson.
///
/// `max_points` caps the passive set. A capped or iteration-limited solve
/// still returns its best feasible iterate with `stop` recording why.
pub fn solve_weights(gc: &Matrix, rhs_c: &Vector, rho_full: &Vector, tol: f64, max_points: Option<usize>) -> Result<SparseQuadratureRule> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("EQP tolerance {tol} must be positive")));
    }
    if gc.ncols() != rho_full.len() {
        return Err(Error::dim("constraint columns differ from the number of quadrature points"));
    }
    let opts = NnlsOptions { max_passive: max_points, ..NnlsOptions::with_tol(tol) };
    let sol = nnls_lawson_hanson(gc, rhs_c, &opts)?;
    if !sol.converged() {
        log::warn!("EQP weights did not reach tolerance {tol}: stop {:?}, residual {:e}", sol.stop, sol.residual);
    }
    let norm = rhs_c.norm();
    let rel = if norm > 0.0 { sol.residual / norm } else { sol.residual };
    Ok(SparseQuadratureRule::from_weights(sol.x, rel, tol, Some(sol.stop)))
}

/// `Σ_{k ∈ support} ρ*_k · (integrand at x_k contracted against Ψ)`.
pub fn evaluate_sparse(fom: &FomProblem, psi: &ReducedBasis, rule: &SparseQuadratureRule, state: &Vector, t: f64) -> Result<Vector> {
    if rule.n_points() != fom.n_points() {
        return Err(Error::dim("rule size differs from the problem quadrature"));
    }
    if psi.full_dim() != fom.state_dim || state.len() != fom.state_dim {
        return Err(Error::dim("basis or state differs from the problem dimension"));
    }
    let mut out = Vector::zeros(psi.dim());
    fom.contracted_points(state, t, &rule.support, &rule.support_weights(), &psi.basis, &mut out);
    Ok(out)
}

/// Elements owning at least one support point.
pub fn sample_mesh_from_rule(rule: &SparseQuadratureRule, full: &FullQuadratureRule) -> BTreeSet<usize> {
    rule.support.iter().map(|&k| full.point_to_element[k]).collect()
}

/// Summary of an EQP construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqpReport {
    pub n_constraints: usize,
    pub zero_rows_dropped: usize,
    pub dependent_rows_dropped: usize,
    pub k: usize,
    pub k_star: usize,
    pub sample_mesh_elements: usize,
    pub residual_conditioned: f64,
    /// `‖G ρ* − G ρ‖ / ‖G ρ‖` in the unconditioned metric.
    pub residual_original: f64,
    pub stop: Option<NnlsStop>,
}

/// Snapshot indices `0, stride, 2·stride, …` plus the last one.
pub fn strided_times(n_snapshots: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut times: Vec<usize> = (0..n_snapshots).step_by(stride).collect();
    if n_snapshots > 0 && times.last() != Some(&(n_snapshots - 1)) {
        times.push(n_snapshots - 1);
    }
    times
}

/// Assembles, conditions and solves in one go.
pub fn build_eqp_rule(
    fom: &FomProblem,
    psi: &ReducedBasis,
    snapshots: &SnapshotMatrix,
    selected_times: &[usize],
    tol: f64,
    max_points: Option<usize>,
) -> Result<(SparseQuadratureRule, EqpReport)> {
    let g = assemble_constraints(fom, psi, snapshots, selected_times)?;
    let (gc, rhs_c, cond) = condition_constraints(&g)?;
    let rule = solve_weights(&gc, &rhs_c, &fom.quadrature.weights, tol, max_points)?;
    let original = (&g.data * &rule.weights - &g.rhs).norm() / g.rhs.norm().max(f64::MIN_POSITIVE);
    let report = EqpReport {
        n_constraints: g.data.nrows(),
        zero_rows_dropped: cond.zero_rows_dropped,
        dependent_rows_dropped: cond.dependent_rows_dropped,
        k: fom.n_points(),
        k_star: rule.k_star,
        sample_mesh_elements: sample_mesh_from_rule(&rule, &fom.quadrature).len(),
        residual_conditioned: rule.achieved_residual,
        residual_original: original,
        stop: rule.stop,
    };
    log::info!("EQP: K* = {} of {} ({} constraints, {} dropped)", rule.k_star, report.k, report.n_constraints, report.dependent_rows_dropped + report.zero_rows_dropped);
    Ok((rule, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{fom_backward_euler, make_nonlinear_diffusion};
    use crate::pod::{assemble_tagged, OffsetMode};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_basis(n: usize, r: usize, seed: u64) -> ReducedBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        ReducedBasis::from_orthonormal(a.qr().q(), Vector::zeros(n))
    }

    fn snapshots_of(states: Vec<Vector>) -> SnapshotMatrix {
        let times: Vec<f64> = (0..states.len()).map(|i| i as f64 * 1e-3).collect();
        assemble_tagged(&states, &times, "", &OffsetMode::Zero).unwrap()
    }

    #[test]
    fn rhs_equals_weighted_row_sums() {
        let fom = make_nonlinear_diffusion(3, 3, 0.3).unwrap();
        let psi = random_basis(16, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = snapshots_of((0..4).map(|_| Vector::from_fn(16, |_, _| rng.random_range(0.0..1.0))).collect());
        let g = assemble_constraints(&fom, &psi, &x, &[0, 2, 3]).unwrap();
        assert_eq!(g.data.shape(), (9, 36));
        assert_eq!(g.row_meta[4], (2, 1));
        // independent oracle: Ψᵀ f(y_s) equals the weighted row sums
        for (s_local, &s) in [0usize, 2, 3].iter().enumerate() {
            let expect = psi.basis.transpose() * fom.eval_force_full(&x.state(s), 0.0).unwrap();
            for j in 0..3 {
                assert_relative_eq!(g.rhs[s_local * 3 + j], expect[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unit_test_function_row_is_raw_integrand() {
        let fom = make_nonlinear_diffusion(2, 2, 0.3).unwrap();
        let dof = 4;
        let psi = ReducedBasis::from_orthonormal(Matrix::from_fn(9, 1, |i, _| if i == dof { 1.0 } else { 0.0 }), Vector::zeros(9));
        let y = Vector::from_fn(9, |i, _| (i as f64 * 0.7).cos());
        let x = snapshots_of(vec![y.clone()]);
        let g = assemble_constraints(&fom, &psi, &x, &[0]).unwrap();
        for k in 0..fom.n_points() {
            let e = fom.point_element(k);
            let local = fom.topology.element_dofs(e).iter().position(|&d| d == dof);
            let raw = fom.point_integrand(&y, 0.0, k).unwrap();
            assert_eq!(g.data[(0, k)], local.map_or(0.0, |a| raw[a]));
        }
    }

    #[test]
    fn zero_state_gives_zero_constraints() {
        let fom = make_nonlinear_diffusion(3, 3, 0.3).unwrap();
        let psi = random_basis(16, 2, 3);
        let g = assemble_constraints(&fom, &psi, &snapshots_of(vec![Vector::zeros(16)]), &[0]).unwrap();
        assert_eq!(g.data.amax(), 0.0);
        assert_eq!(g.rhs.amax(), 0.0);
        assert!(condition_constraints(&g).is_err());
    }

    #[test]
    fn row_scaling_example() {
        let g = ConstraintMatrix { data: Matrix::from_row_slice(1, 2, &[2.0, 4.0]), row_meta: vec![(0, 0)], rhs: Vector::from_vec(vec![6.0]) };
        let (gc, rhs_c, report) = condition_constraints(&g).unwrap();
        assert_eq!(report.row_scale[0], 0.25);
        // rescaled row [0.5, 1] = L Q with L = ‖row‖ up to sign
        let norm = (0.5f64 * 0.5 + 1.0).sqrt();
        assert_relative_eq!(report.l[(0, 0)].abs(), norm, epsilon = 1e-15);
        assert_relative_eq!((&gc * Vector::from_vec(vec![1.0, 1.0]))[0], rhs_c[0], epsilon = 1e-15);
    }

    #[test]
    fn conditioned_rows_are_orthonormal_and_zero_rows_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut data = Matrix::from_fn(6, 15, |_, _| rng.random_range(-3.0..3.0));
        data.row_mut(2).fill(0.0);
        let rho = Vector::from_element(15, 0.1);
        let rhs = &data * &rho;
        let g = ConstraintMatrix { data, row_meta: (0..6).map(|i| (i, 0)).collect(), rhs };
        let (gc, rhs_c, report) = condition_constraints(&g).unwrap();
        assert_eq!(report.zero_rows_dropped, 1);
        assert_eq!(gc.nrows(), 5);
        assert!((&gc * gc.transpose() - Matrix::identity(5, 5)).amax() <= 1e-10);
        // ρ still satisfies the conditioned system
        assert!((&gc * &rho - rhs_c).amax() <= 1e-12);
    }

    #[test]
    fn orthonormal_rows_are_kept_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = Matrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0)).qr().q().transpose();
        // max-abs scaling changes row norms, so compare directions only
        let rhs = Vector::from_fn(3, |i, _| i as f64);
        let g = ConstraintMatrix { data: q.clone(), row_meta: vec![(0, 0); 3], rhs };
        let (gc, _, _) = condition_constraints(&g).unwrap();
        for i in 0..3 {
            let d = gc.row(i).dot(&q.row(i));
            assert_relative_eq!(d.abs(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_constraints_clip_at_zero() {
        let rhs = Vector::from_vec(vec![0.5, -0.2, 1.5, 0.0]);
        let rule = solve_weights(&Matrix::identity(4, 4), &rhs, &Vector::from_element(4, 1.0), 1e-12, None).unwrap();
        assert_eq!(rule.weights, Vector::from_vec(vec![0.5, 0.0, 1.5, 0.0]));
        assert_eq!(rule.support, vec![0, 2]);
        assert_eq!(rule.k_star, 2);
    }

    #[test]
    fn conditioning_preserves_residuals_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let m = rng.random_range(2..=8);
            let k = rng.random_range(m + 1..=20);
            let data = Matrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
            let rho = Vector::from_fn(k, |_, _| rng.random_range(0.1..1.0));
            let rhs = &data * &rho;
            let g = ConstraintMatrix { data: data.clone(), row_meta: vec![(0, 0); m], rhs: rhs.clone() };
            let (gc, rhs_c, _) = condition_constraints(&g).unwrap();
            let with = solve_weights(&gc, &rhs_c, &rho, 1e-12, None).unwrap();
            let without = solve_weights(&data, &rhs, &rho, 1e-12, None).unwrap();
            let r1 = (&data * &with.weights - &rhs).norm() / rhs.norm();
            let r2 = (&data * &without.weights - &rhs).norm() / rhs.norm();
            assert!((r1 - r2).abs() <= 1e-6, "{r1} vs {r2}");
        }
    }

    #[test]
    fn full_rule_matches_projected_force() {
        let fom = make_nonlinear_diffusion(4, 4, 0.3).unwrap();
        let psi = random_basis(25, 4, 5);
        let rule = SparseQuadratureRule::full(&fom.quadrature);
        assert_eq!(rule.k_star, fom.n_points());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let y = Vector::from_fn(25, |_, _| rng.random_range(0.0..1.0));
            let sparse = evaluate_sparse(&fom, &psi, &rule, &y, 0.0).unwrap();
            let full = psi.basis.transpose() * fom.eval_force_full(&y, 0.0).unwrap();
            assert!((sparse - &full).amax() <= 1e-12 * (1.0 + full.amax()));
        }
        let zero = SparseQuadratureRule::from_weights(Vector::zeros(fom.n_points()), 0.0, 0.0, None);
        assert_eq!(evaluate_sparse(&fom, &psi, &zero, &fom.initial_state, 0.0).unwrap().amax(), 0.0);
    }

    #[test]
    fn sample_mesh_counts() {
        let fom = make_nonlinear_diffusion(2, 2, 0.3).unwrap();
        let rule = |w: &[usize]| {
            let mut v = Vector::zeros(16);
            for &k in w {
                v[k] = 1.0;
            }
            SparseQuadratureRule::from_weights(v, 0.0, 0.0, None)
        };
        assert!(sample_mesh_from_rule(&rule(&[]), &fom.quadrature).is_empty());
        assert_eq!(sample_mesh_from_rule(&rule(&[6]), &fom.quadrature).len(), 1);
        assert_eq!(sample_mesh_from_rule(&rule(&[0, 1, 5, 14]), &fom.quadrature).len(), 3);
    }

    #[test]
    fn json_round_trip_lists_support_weights() {
        let mut w = Vector::zeros(6);
        w[1] = 0.25;
        w[4] = 2.0;
        let rule = SparseQuadratureRule::from_weights(w, 3e-5, 1e-4, Some(NnlsStop::Residual));
        let text = serde_json::to_string(&rule).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["K"], 6);
        assert_eq!(v["support"], serde_json::json!([1, 4]));
        assert_eq!(v["weights"], serde_json::json!([0.25, 2.0]));
        let back: SparseQuadratureRule = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rule);
        assert!(serde_json::from_str::<SparseQuadratureRule>(r#"{"K":2,"support":[3],"weights":[1.0],"tol":0,"residual":0}"#).is_err());
    }

    #[test]
    fn desk_diffusion_rule_is_sparse() {
        let fom = make_nonlinear_diffusion(8, 8, 0.3).unwrap();
        let traj = fom_backward_euler(&fom, 1e-3, 100, 1e-10).unwrap();
        let x = assemble_tagged(&traj.states, &traj.times, "0.3", &OffsetMode::Zero).unwrap();
        let psi = ReducedBasis::from_snapshots(&x, 4.0).unwrap();
        let all: Vec<usize> = (0..x.n_snapshots()).collect();
        let (rule, report) = build_eqp_rule(&fom, &psi, &x, &all, 1e-4, None).unwrap();
        assert!(rule.k_star < fom.n_points(), "K* = {}", rule.k_star);
        assert!(rule.achieved_residual <= 1e-4);
        assert!(rule.weights.iter().all(|&w| w >= 0.0));
        assert_eq!(report.k_star, rule.k_star);
    }
}
