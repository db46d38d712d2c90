//! Galerkin reduced models and their online time integration.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eqp::SparseQuadratureRule;
use crate::error::{Error, Result};
use crate::fom::{FieldSpan, FomProblem, NEWTON_MAX_ITERS};
use crate::interp::ObliqueProjector;
use crate::numerics::{Matrix, Vector};
use crate::pod::ReducedBasis;

/// Default Newton tolerance of the implicit reduced solver.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;

/// How the reduced nonlinear term is evaluated.
#[derive(Debug, Clone)]
pub enum HyperReduction {
    /// `Ψᵀ f(ỹ)` with full assembly.
    None,
    /// `ΨᵀΞ(ZᵀΞ)⁺ f_Z(ỹ)` from the sampled entries.
    Interpolation(ObliqueProjector),
    /// Sparse quadrature over the support points only.
    Eqp(SparseQuadratureRule),
}

impl HyperReduction {
    pub fn name(&self) -> &'static str {
        match self {
            HyperReduction::None => "none",
            HyperReduction::Interpolation(_) => "interpolation",
            HyperReduction::Eqp(_) => "eqp",
        }
    }
}

/// Precomputed sample-mesh data for the hyper-reduced branches.
#[derive(Debug, Clone, Default)]
struct SampleMesh {
    elements: Vec<usize>,
    /// Degrees of freedom of those elements; the only entries lifted online.
    closure: Vec<usize>,
}

/// Galerkin projection of a [`FomProblem`] onto an affine subspace.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub basis: ReducedBasis,
    /// `ΨᵀMΨ`.
    pub reduced_mass: Matrix,
    /// `ΨᵀAΨ`.
    pub reduced_linear: Matrix,
    /// `ΨᵀA·offset`, the affine part of the linear term.
    pub reduced_affine: Vector,
    pub hr: HyperReduction,
    pub fom: Arc<FomProblem>,
    mesh: SampleMesh,
}

/// `M̂ = ΨᵀMΨ`, `Â = ΨᵀAΨ`, no hyper-reduction.
pub fn project_operators(fom: Arc<FomProblem>, psi: ReducedBasis) -> Result<ReducedModel> {
    if psi.full_dim() != fom.state_dim || psi.offset.len() != fom.state_dim {
        return Err(Error::dim(format!("basis has {} rows for a state of length {}", psi.full_dim(), fom.state_dim)));
    }
    let pt = psi.basis.transpose();
    let reduced_mass = &pt * &fom.mass * &psi.basis;
    let reduced_linear = &pt * &fom.linear_op * &psi.basis;
    let reduced_affine = &pt * (&fom.linear_op * &psi.offset);
    Ok(ReducedModel { basis: psi, reduced_mass, reduced_linear, reduced_affine, hr: HyperReduction::None, fom, mesh: SampleMesh::default() })
}

impl ReducedModel {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Switches to interpolation hyper-reduction; the projector must carry
    /// `ΨᵀΞ(ZᵀΞ)⁺` for this model's basis.
    pub fn with_interpolation(mut self, projector: ObliqueProjector) -> Result<Self> {
        let contracted = projector.contracted.as_ref().ok_or_else(|| Error::invalid("projector lacks the contracted operator"))?;
        if contracted.shape() != (self.dim(), projector.samples.len()) {
            return Err(Error::dim("contracted operator does not match the reduced basis"));
        }
        if projector.force_basis.rows() != self.fom.state_dim {
            return Err(Error::dim("force basis rows differ from the state dimension"));
        }
        let elements: Vec<usize> = self.fom.sample_mesh_from_indices(&projector.samples.indices).into_iter().collect();
        let closure = self.fom.element_closure(elements.iter().cloned()).into_iter().collect();
        self.mesh = SampleMesh { elements, closure };
        self.hr = HyperReduction::Interpolation(projector);
        Ok(self)
    }

    pub fn with_eqp(mut self, rule: SparseQuadratureRule) -> Result<Self> {
        if rule.n_points() != self.fom.n_points() {
            return Err(Error::dim("rule size differs from the problem quadrature"));
        }
        let elements: Vec<usize> = crate::eqp::sample_mesh_from_rule(&rule, &self.fom.quadrature).into_iter().collect();
        let closure = self.fom.element_closure(elements.iter().cloned()).into_iter().collect();
        self.mesh = SampleMesh { elements, closure };
        self.hr = HyperReduction::Eqp(rule);
        Ok(self)
    }

    /// Elements visited online (all of them without hyper-reduction).
    pub fn sample_mesh_elements(&self) -> usize {
        match self.hr {
            HyperReduction::None => self.fom.n_elements(),
            _ => self.mesh.elements.len(),
        }
    }

    /// `n_f` for interpolation, `K*` for EQP, `K` otherwise.
    pub fn n_points(&self) -> usize {
        match &self.hr {
            HyperReduction::None => self.fom.n_points(),
            HyperReduction::Interpolation(p) => p.samples.len(),
            HyperReduction::Eqp(rule) => rule.k_star,
        }
    }

    pub fn initial_reduced_state(&self) -> Vector {
        self.basis.project(&self.fom.initial_state)
    }

    /// Lifts only the sample-mesh entries; the rest stay zero.
    fn lift_on_mesh(&self, y_hat: &Vector) -> Vector {
        let mut y = Vector::zeros(self.fom.state_dim);
        for &d in &self.mesh.closure {
            y[d] = self.basis.offset[d] + self.basis.basis.row(d).transpose().dot(y_hat);
        }
        y
    }

    /// Hyper-reduced approximation of `Ψᵀ f(offset + Ψŷ, t)`.
    pub fn reduced_force(&self, y_hat: &Vector, t: f64) -> Result<Vector> {
        if y_hat.len() != self.dim() {
            return Err(Error::dim(format!("reduced state of length {} (expected {})", y_hat.len(), self.dim())));
        }
        if !y_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("reduced state".into()));
        }
        match &self.hr {
            HyperReduction::None => {
                let y = self.basis.lift(y_hat);
                Ok(self.basis.basis.transpose() * self.fom.eval_force_full(&y, t)?)
            }
            HyperReduction::Interpolation(p) => {
                let y = self.lift_on_mesh(y_hat);
                let mut f = Vector::zeros(self.fom.state_dim);
                self.fom.assemble_elements(&y, t, &self.mesh.elements, &mut f);
                let sampled = Vector::from_iterator(p.samples.len(), p.samples.indices.iter().map(|&i| f[i]));
                Ok(p.contracted.as_ref().expect("checked on construction") * sampled)
            }
            HyperReduction::Eqp(rule) => {
                let y = self.lift_on_mesh(y_hat);
                let mut out = Vector::zeros(self.dim());
                self.fom.contracted_points(&y, t, &rule.support, &rule.support_weights(), &self.basis.basis, &mut out);
                Ok(out)
            }
        }
    }
}

/// Online trajectory of one reduced solve.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub reduced_states: Vec<Vector>,
    /// Window active at each recorded time.
    pub window: Vec<usize>,
    pub lifted_final: Vector,
    /// Seconds spent in the stepping loop.
    pub wall_time: f64,
    pub n_steps: usize,
    pub newton_iters_total: usize,
}

/// Time integrator choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrator {
    BackwardEuler { newton_tol: f64 },
    Rk4,
}

fn check_steps(dt: f64, n_steps: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("zero-length run requested"));
    }
    Ok(())
}

struct StepOutcome {
    state: Vector,
    newton_iters: usize,
}

/// One backward-Euler step with a forward-difference Jacobian.
fn backward_euler_step(model: &ReducedModel, y: &Vector, t_next: f64, dt: f64, newton_tol: f64, step: usize) -> Result<StepOutcome> {
    let r = model.dim();
    let m_dt = &model.reduced_mass / dt;
    let lhs_linear = &m_dt + &model.reduced_linear;
    let rhs = &m_dt * y - &model.reduced_affine;
    let tol = newton_tol * (1.0 + rhs.norm());
    let residual = |z: &Vector, f: &Vector| &lhs_linear * z - &rhs - f;

    let mut z = y.clone();
    let mut f = model.reduced_force(&z, t_next)?;
    let mut res = residual(&z, &f);
    let mut iters = 0;
    while res.norm() > tol {
        if iters == NEWTON_MAX_ITERS {
            return Err(Error::NewtonDiverged { step, iterations: iters, residual: res.norm() });
        }
        let mut jac = lhs_linear.clone();
        for j in 0..r {
            let h = 1e-7 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            zp[j] += h;
            let df = (model.reduced_force(&zp, t_next)? - &f) / h;
            jac.column_mut(j).axpy(-1.0, &df, 1.0);
        }
        let delta = jac.lu().solve(&res).ok_or_else(|| Error::Singular(format!("reduced Newton Jacobian at step {step}")))?;
        z -= delta;
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationBlowup { step });
        }
        f = model.reduced_force(&z, t_next)?;
        res = residual(&z, &f);
        iters += 1;
    }
    Ok(StepOutcome { state: z, newton_iters: iters })
}

/// Reduced right-hand side `M̂⁻¹(f̄ − Âŷ − â)` with `M̂` factored once.
struct Rk4Rate<'a> {
    model: &'a ReducedModel,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Rk4Rate<'a> {
    fn new(model: &'a ReducedModel) -> Result<Self> {
        let chol = model.reduced_mass.clone().cholesky().ok_or_else(|| Error::Singular("reduced mass matrix".into()))?;
        Ok(Rk4Rate { model, chol })
    }

    fn eval(&self, y: &Vector, t: f64) -> Result<Vector> {
        let m = self.model;
        Ok(self.chol.solve(&(m.reduced_force(y, t)? - &m.reduced_linear * y - &m.reduced_affine)))
    }

    fn step(&self, y: &Vector, t: f64, dt: f64, step: usize) -> Result<Vector> {
        let k1 = self.eval(y, t)?;
        let k2 = self.eval(&(y + &k1 * (0.5 * dt)), t + 0.5 * dt)?;
        let k3 = self.eval(&(y + &k2 * (0.5 * dt)), t + 0.5 * dt)?;
        let k4 = self.eval(&(y + &k3 * dt), t + dt)?;
        let next = y + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationBlowup { step });
        }
        Ok(next)
    }
}

/// Integrates `n_steps` of one window starting from `y0` at `t0`.
/// Returns the visited states (excluding `y0`) and the Newton count.
fn integrate_window(model: &ReducedModel, integrator: Integrator, y0: Vector, t0: f64, dt: f64, n_steps: usize, step_base: usize) -> Result<(Vec<Vector>, usize)> {
    let mut states = Vec::with_capacity(n_steps);
    let mut iters = 0;
    let mut y = y0;
    match integrator {
        Integrator::BackwardEuler { newton_tol } => {
            for s in 1..=n_steps {
                let out = backward_euler_step(model, &y, t0 + s as f64 * dt, dt, newton_tol, step_base + s)?;
                iters += out.newton_iters;
                y = out.state;
                states.push(y.clone());
            }
        }
        Integrator::Rk4 => {
            let rate = Rk4Rate::new(model)?;
            for s in 1..=n_steps {
                y = rate.step(&y, t0 + (s - 1) as f64 * dt, dt, step_base + s)?;
                states.push(y.clone());
            }
        }
    }
    Ok((states, iters))
}

fn run_single(model: &ReducedModel, integrator: Integrator, dt: f64, n_steps: usize) -> Result<TrajectoryRecord> {
    check_steps(dt, n_steps)?;
    let y0 = model.initial_reduced_state();
    let start = Instant::now();
    let (states, iters) = integrate_window(model, integrator, y0.clone(), 0.0, dt, n_steps, 0)?;
    let wall_time = start.elapsed().as_secs_f64();
    let mut reduced_states = Vec::with_capacity(n_steps + 1);
    reduced_states.push(y0);
    reduced_states.extend(states);
    let lifted_final = model.basis.lift(reduced_states.last().expect("nonempty"));
    Ok(TrajectoryRecord {
        times: (0..=n_steps).map(|s| s as f64 * dt).collect(),
        reduced_states,
        window: vec![0; n_steps + 1],
        lifted_final,
        wall_time,
        n_steps,
        newton_iters_total: iters,
    })
}

/// Backward Euler on `M̂(ŷⁿ⁺¹ − ŷⁿ)/Δt + Âŷⁿ⁺¹ + â = f̄(ŷⁿ⁺¹, tⁿ⁺¹)` from
/// `ŷ₀ = Ψᵀ(y₀ − offset)`.
pub fn solve_backward_euler(model: &ReducedModel, dt: f64, n_steps: usize, newton_tol: f64) -> Result<TrajectoryRecord> {
    run_single(model, Integrator::BackwardEuler { newton_tol }, dt, n_steps)
}

/// Classical RK4 on `dŷ/dt = M̂⁻¹(f̄ − Âŷ − â)`.
pub fn solve_rk4(model: &ReducedModel, dt: f64, n_steps: usize) -> Result<TrajectoryRecord> {
    run_single(model, Integrator::Rk4, dt, n_steps)
}

/// Temporally local reduced models.
#[derive(Debug, Clone)]
pub struct TimeWindowSchedule {
    /// `0 = b₀ < b₁ < … < b_W = T`.
    pub boundaries: Vec<f64>,
    pub models: Vec<ReducedModel>,
}

impl TimeWindowSchedule {
    pub fn new(boundaries: Vec<f64>, models: Vec<ReducedModel>) -> Result<Self> {
        if models.is_empty() || boundaries.len() != models.len() + 1 {
            return Err(Error::invalid(format!("{} boundaries for {} windows", boundaries.len(), models.len())));
        }
        if boundaries[0] != 0.0 || boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("window boundaries must start at 0 and increase strictly"));
        }
        Ok(TimeWindowSchedule { boundaries, models })
    }

    /// Boundaries splitting `n_steps` steps of size `dt` into `n_windows`
    /// nearly equal step counts.
    pub fn uniform_boundaries(n_steps: usize, dt: f64, n_windows: usize) -> Vec<f64> {
        let w = n_windows.clamp(1, n_steps.max(1));
        (0..=w).map(|i| (i * n_steps / w) as f64 * dt).collect()
    }
}

/// Integrates each window with its own model. Window boundaries lift with
/// the outgoing basis and project with the incoming one.
pub fn solve_windowed(schedule: &TimeWindowSchedule, integrator: Integrator, dt: f64) -> Result<TrajectoryRecord> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    let steps: Vec<usize> = schedule.boundaries.windows(2).map(|w| ((w[1] - w[0]) / dt).round() as usize).collect();
    if steps.contains(&0) {
        return Err(Error::invalid("a time window is shorter than one step"));
    }
    let first = &schedule.models[0];
    let y0 = first.initial_reduced_state();
    let mut reduced_states = vec![y0.clone()];
    let mut window = vec![0];
    let mut iters = 0;
    let mut y = y0;
    let mut step_base = 0;

    let start = Instant::now();
    for (w, model) in schedule.models.iter().enumerate() {
        if w > 0 {
            let lifted = schedule.models[w - 1].basis.lift(&y);
            y = model.basis.project(&lifted);
        }
        let (states, it) = integrate_window(model, integrator, y.clone(), step_base as f64 * dt, dt, steps[w], step_base)?;
        iters += it;
        y = states.last().expect("window has steps").clone();
        window.extend(std::iter::repeat_n(w, states.len()));
        reduced_states.extend(states);
        step_base += steps[w];
    }
    let wall_time = start.elapsed().as_secs_f64();
    let lifted_final = schedule.models.last().expect("nonempty").basis.lift(&y);
    Ok(TrajectoryRecord {
        times: (0..=step_base).map(|s| s as f64 * dt).collect(),
        reduced_states,
        window,
        lifted_final,
        wall_time,
        n_steps: step_base,
        newton_iters_total: iters,
    })
}

/// Norm used to compare ROM and FOM states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    #[default]
    Euclidean,
    Mass,
}

/// Relative errors per field and in the product norm over all fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub norm: ErrorNorm,
    /// `None` when the reference field is identically zero.
    pub per_field: Vec<(String, Option<f64>)>,
    pub combined: f64,
}

/// `‖rom − fom‖_W / ‖fom‖_W` per field and combined. The mass norm uses the
/// diagonal block of `M` belonging to each field.
pub fn relative_l2_error(rom_final: &Vector, fom_final: &Vector, norm: ErrorNorm, fields: &[FieldSpan], mass: Option<&Matrix>) -> Result<ErrorReport> {
    if rom_final.len() != fom_final.len() {
        return Err(Error::dim(format!("states of length {} and {}", rom_final.len(), fom_final.len())));
    }
    let whole = [FieldSpan::new("state", 0, fom_final.len())];
    let fields = if fields.is_empty() { &whole[..] } else { fields };
    let sq = |v: &Vector, f: &FieldSpan| -> Result<f64> {
        let part = v.rows(f.offset, f.len);
        match norm {
            ErrorNorm::Euclidean => Ok(part.norm_squared()),
            ErrorNorm::Mass => {
                let m = mass.ok_or_else(|| Error::invalid("mass norm requested without a mass matrix"))?;
                let block = m.view((f.offset, f.offset), (f.len, f.len));
                Ok(part.dot(&(block * part)))
            }
        }
    };
    let diff = rom_final - fom_final;
    let mut per_field = Vec::with_capacity(fields.len());
    let (mut num, mut den) = (0.0, 0.0);
    for f in fields {
        let (e, r) = (sq(&diff, f)?, sq(fom_final, f)?);
        num += e;
        den += r;
        per_field.push((f.name.clone(), if r > 0.0 { Some((e / r).sqrt()) } else { None }));
    }
    if !(den > 0.0) {
        return Err(Error::invalid("reference state has zero norm"));
    }
    Ok(ErrorReport { norm, per_field, combined: (num / den).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eqp::SparseQuadratureRule;
    use crate::fom::{fom_backward_euler, fom_rk4, make_diffusion_with_conductivity, make_hyperelastic_bar, make_nonlinear_diffusion};
    use crate::interp::{build_projector, ForceBasis, SampleIndexSet, SamplerKind};
    use crate::pod::{assemble_tagged, OffsetMode};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_model(fom: FomProblem) -> ReducedModel {
        let n = fom.state_dim;
        project_operators(Arc::new(fom), ReducedBasis::from_orthonormal(Matrix::identity(n, n), Vector::zeros(n))).unwrap()
    }

    fn random_basis(n: usize, r: usize, seed: u64) -> ReducedBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Matrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        ReducedBasis::from_orthonormal(q, Vector::zeros(n))
    }

    #[test]
    fn identity_basis_reproduces_operators() {
        let fom = make_hyperelastic_bar(3, 1.0).unwrap();
        let (m, a) = (fom.mass.clone(), fom.linear_op.clone());
        let model = identity_model(fom);
        assert_eq!(model.reduced_mass, m);
        assert_eq!(model.reduced_linear, a);
    }

    #[test]
    fn reduced_mass_is_symmetric_positive() {
        let fom = Arc::new(make_nonlinear_diffusion(4, 4, 0.3).unwrap());
        let model = project_operators(fom.clone(), random_basis(25, 5, 2)).unwrap();
        let m = &model.reduced_mass;
        assert!((m - m.transpose()).amax() <= 1e-12 * m.amax());
        assert!(m.clone().cholesky().is_some());
        let one = project_operators(fom, random_basis(25, 1, 3)).unwrap();
        assert!(one.reduced_mass[(0, 0)] > 0.0);
    }

    #[test]
    fn reduced_force_strategies_agree() {
        let fom = Arc::new(make_nonlinear_diffusion(4, 4, 0.3).unwrap());
        let psi = random_basis(25, 4, 7);
        let none = project_operators(fom.clone(), psi.clone()).unwrap();
        let eqp = none.clone().with_eqp(SparseQuadratureRule::full(&fom.quadrature)).unwrap();
        // interpolation with every row sampled and a force basis spanning ℝᴺ
        let xi = ForceBasis::new(Matrix::identity(25, 25), Vector::from_element(25, 1.0));
        let z = SampleIndexSet { indices: (0..25).collect(), r_f: 25, method: SamplerKind::Deim };
        let interp = none.clone().with_interpolation(build_projector(&xi, &z, Some(&psi.basis)).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let y_hat = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let reference = psi.basis.transpose() * fom.eval_force_full(&psi.lift(&y_hat), 0.0).unwrap();
            let scale = 1.0 + reference.amax();
            assert!((none.reduced_force(&y_hat, 0.0).unwrap() - &reference).amax() <= 1e-12 * scale);
            assert!((eqp.reduced_force(&y_hat, 0.0).unwrap() - &reference).amax() <= 1e-12 * scale);
            assert!((interp.reduced_force(&y_hat, 0.0).unwrap() - &reference).amax() <= 1e-12 * scale);
        }
        assert_eq!(eqp.n_points(), 64);
        assert_eq!(eqp.sample_mesh_elements(), 16);
    }

    #[test]
    fn zero_dynamics_keep_state_constant() {
        // κ ≡ 0 gives f = 0, and A = 0 for diffusion
        let fom = make_diffusion_with_conductivity(3, 3, 0.3, 0.0, 0.0).unwrap();
        let model = project_operators(Arc::new(fom), random_basis(16, 3, 1)).unwrap();
        let y0 = model.initial_reduced_state();
        for rec in [solve_backward_euler(&model, 0.01, 5, 1e-10).unwrap(), solve_rk4(&model, 0.01, 5).unwrap()] {
            for y in &rec.reduced_states {
                assert!((y - &y0).amax() <= 1e-14);
            }
        }
    }

    #[test]
    fn rk4_scalar_decay_matches_taylor_polynomial() {
        // f(p) = −κ L p with κ ≡ 1 on a mode with M̂⁻¹(Ψᵀ L Ψ) = 1
        let fom = Arc::new(make_diffusion_with_conductivity(2, 2, 0.3, 1.0, 0.0).unwrap());
        let k = -fom.force_jacobian(&Vector::zeros(9), 0.0).unwrap();
        // generalized eigenvector of (K, M): K v = λ M v
        let chol = fom.mass.clone().cholesky().unwrap();
        let l_inv = chol.l().try_inverse().unwrap();
        let sym = &l_inv * &k * l_inv.transpose();
        let eig = sym.symmetric_eigen();
        let idx = (0..9).find(|&i| eig.eigenvalues[i] > 1e-8).unwrap();
        let lambda = eig.eigenvalues[idx];
        let v = l_inv.transpose() * eig.eigenvectors.column(idx);
        let psi = ReducedBasis::from_orthonormal(Matrix::from_column_slice(9, 1, (&v / v.norm()).as_slice()), Vector::zeros(9));
        let mut model = project_operators(fom.clone(), psi).unwrap();
        // scale time so that ŷ' = −ŷ
        let dt = 0.1 / lambda;
        let y0 = model.initial_reduced_state();
        model.basis.offset = Vector::zeros(9);
        let rec = solve_rk4(&model, dt, 1).unwrap();
        let h: f64 = 0.1;
        let expect = y0[0] * (1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0);
        assert_relative_eq!(rec.reduced_states[1][0], expect, max_relative = 1e-12);
    }

    #[test]
    fn linear_limit_matches_dense_fom() {
        let fom = make_diffusion_with_conductivity(4, 4, 0.3, 2.0, 0.0).unwrap();
        let reference = fom_backward_euler(&fom, 1e-3, 20, 1e-12).unwrap();
        let model = identity_model(fom);
        let rec = solve_backward_euler(&model, 1e-3, 20, 1e-12).unwrap();
        assert!((&rec.lifted_final - reference.final_state()).amax() <= 1e-9);
    }

    #[test]
    fn bar_clamped_dof_stays_zero() {
        let fom = make_hyperelastic_bar(8, 1.0).unwrap();
        let traj = fom_rk4(&fom, 0.01, 100).unwrap();
        let offset = crate::fom::bar_reference_offset(&fom);
        let x = assemble_tagged(&traj.states, &traj.times, "1", &OffsetMode::Given(offset)).unwrap();
        let psi = ReducedBasis::from_snapshots(&x, 10.0).unwrap();
        let model = project_operators(Arc::new(fom), psi).unwrap();
        let rec = solve_rk4(&model, 0.01, 100).unwrap();
        for y in &rec.reduced_states {
            assert!(model.basis.lift(y)[0].abs() <= 1e-12);
        }
        let err = relative_l2_error(&rec.lifted_final, traj.final_state(), ErrorNorm::Euclidean, &model.fom.fields, None).unwrap();
        assert!(err.combined <= 1e-6, "{err:?}");
    }

    #[test]
    fn windows_with_identical_bases_match_single_window() {
        let fom = make_nonlinear_diffusion(4, 4, 0.3).unwrap();
        let traj = fom_backward_euler(&fom, 1e-3, 30, 1e-10).unwrap();
        let x = assemble_tagged(&traj.states, &traj.times, "", &OffsetMode::Zero).unwrap();
        let psi = ReducedBasis::from_snapshots(&x, 6.0).unwrap();
        let model = project_operators(Arc::new(fom), psi).unwrap();
        let single = solve_backward_euler(&model, 1e-3, 30, 1e-10).unwrap();
        let schedule = TimeWindowSchedule::new(vec![0.0, 0.012, 0.03], vec![model.clone(), model.clone()]).unwrap();
        let windowed = solve_windowed(&schedule, Integrator::BackwardEuler { newton_tol: 1e-10 }, 1e-3).unwrap();
        assert_eq!(windowed.n_steps, 30);
        assert_eq!(windowed.window[13], 1);
        for (a, b) in single.reduced_states.iter().zip(&windowed.reduced_states) {
            assert!((a - b).amax() <= 1e-12);
        }
        let one = TimeWindowSchedule::new(vec![0.0, 0.03], vec![model]).unwrap();
        let w1 = solve_windowed(&one, Integrator::BackwardEuler { newton_tol: 1e-10 }, 1e-3).unwrap();
        assert_eq!(w1.lifted_final, single.lifted_final);
    }

    #[test]
    fn identity_second_window_restarts_fom() {
        let fom = make_nonlinear_diffusion(3, 3, 0.3).unwrap();
        let traj = fom_backward_euler(&fom, 1e-3, 10, 1e-12).unwrap();
        let x = assemble_tagged(&traj.states, &traj.times, "", &OffsetMode::Zero).unwrap();
        let fom = Arc::new(fom);
        let coarse = project_operators(fom.clone(), ReducedBasis::from_snapshots(&x, 3.0).unwrap()).unwrap();
        let full = project_operators(fom.clone(), ReducedBasis::from_orthonormal(Matrix::identity(16, 16), Vector::zeros(16))).unwrap();
        let schedule = TimeWindowSchedule::new(vec![0.0, 0.004, 0.01], vec![coarse.clone(), full]).unwrap();
        let rec = solve_windowed(&schedule, Integrator::BackwardEuler { newton_tol: 1e-12 }, 1e-3).unwrap();
        // oracle: FOM restarted from the coarse ROM state lifted at t = 0.004
        let first = solve_backward_euler(&coarse, 1e-3, 4, 1e-12).unwrap();
        let mut restarted = (*fom).clone();
        restarted.initial_state = first.lifted_final.clone();
        let tail = fom_backward_euler(&restarted, 1e-3, 6, 1e-12).unwrap();
        assert!((&rec.lifted_final - tail.final_state()).amax() <= 1e-9);
    }

    #[test]
    fn schedule_validation() {
        let fom = Arc::new(make_nonlinear_diffusion(2, 2, 0.3).unwrap());
        let m = project_operators(fom, random_basis(9, 2, 1)).unwrap();
        assert!(TimeWindowSchedule::new(vec![0.0, 0.5, 0.5], vec![m.clone(), m.clone()]).is_err());
        assert!(TimeWindowSchedule::new(vec![0.1, 0.5], vec![m.clone()]).is_err());
        assert!(TimeWindowSchedule::new(vec![0.0, 0.5], vec![m.clone(), m]).is_err());
        assert_eq!(TimeWindowSchedule::uniform_boundaries(10, 0.1, 3).len(), 4);
    }

    #[test]
    fn error_examples() {
        let fom = Vector::from_vec(vec![3.0, 4.0]);
        let e = relative_l2_error(&fom, &fom, ErrorNorm::Euclidean, &[], None).unwrap();
        assert_eq!(e.combined, 0.0);
        let e = relative_l2_error(&(2.0 * &fom), &fom, ErrorNorm::Euclidean, &[], None).unwrap();
        assert_eq!(e.combined, 1.0);
        let e = relative_l2_error(&Vector::from_vec(vec![3.0, 1.0]), &fom, ErrorNorm::Euclidean, &[], None).unwrap();
        assert_relative_eq!(e.combined, 0.6, epsilon = 1e-15);
        assert!(relative_l2_error(&fom, &Vector::zeros(2), ErrorNorm::Euclidean, &[], None).is_err());
        let fields = [FieldSpan::new("a", 0, 1), FieldSpan::new("b", 1, 1)];
        let e = relative_l2_error(&Vector::from_vec(vec![3.0, 1.0]), &fom, ErrorNorm::Mass, &fields, Some(&Matrix::identity(2, 2))).unwrap();
        assert_eq!(e.per_field[0].1, Some(0.0));
        assert_relative_eq!(e.per_field[1].1.unwrap(), 0.75, epsilon = 1e-15);
        assert_relative_eq!(e.combined, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn rejects_mismatched_basis() {
        let fom = Arc::new(make_nonlinear_diffusion(2, 2, 0.3).unwrap());
        assert!(project_operators(fom.clone(), random_basis(8, 2, 1)).is_err());
        let m = project_operators(fom, random_basis(9, 2, 1)).unwrap();
        assert!(m.reduced_force(&Vector::zeros(3), 0.0).is_err());
        assert!(solve_rk4(&m, 0.1, 0).is_err());
    }
}
