//! Full-order finite-element models.
//!
//! A [`FomProblem`] is the semi-discrete system `M dy/dt + A y = f(y, t)`.
//! The nonlinear force is assembled from per-quadrature-point integrands
//! supplied by an [`ElementPhysics`] implementation, which lets the same
//! problem serve full assembly, sampled-entry assembly (interpolation
//! hyper-reduction) and per-point contracted integrands (EQP).

mod bar;
mod diffusion;
mod solve;

pub use bar::{bar_reference_offset, make_hyperelastic_bar, make_hyperelastic_bar_with, BarMaterial, BarPhysics, BAR_LENGTH};
pub use diffusion::{make_diffusion_with_conductivity, make_nonlinear_diffusion, DiffusionPhysics};
pub use solve::{fom_backward_euler, fom_rk4, FomTrajectory, NEWTON_MAX_ITERS};

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite_vector, Matrix, Vector};

/// Local integrand of one element at one of its quadrature points.
pub trait ElementPhysics: Send + Sync + fmt::Debug {
    /// Writes `η(y, φ_a, t, x_k)` for every local degree of freedom `a`
    /// (unweighted by the quadrature weight).
    fn integrand(&self, element: usize, local_point: usize, local_state: &[f64], t: f64, out: &mut [f64]);

    /// Row-major `∂ out_a / ∂ local_state_b`.
    fn integrand_jacobian(&self, element: usize, local_point: usize, local_state: &[f64], t: f64, out: &mut [f64]);
}

/// Which benchmark a problem instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Diffusion,
    Bar,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Diffusion => "diffusion",
            ProblemKind::Bar => "bar",
        })
    }
}

/// A named contiguous block of the state vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpan {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl FieldSpan {
    pub fn new(name: &str, offset: usize, len: usize) -> Self {
        FieldSpan { name: name.to_string(), offset, len }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Global quadrature rule of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FullQuadratureRule {
    pub weights: Vector,
    pub point_to_element: Vec<usize>,
}

impl FullQuadratureRule {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }
}

/// Element connectivity with a fixed number of dofs and points per element.
/// Points of element `e` are numbered `e·q .. (e+1)·q`.
#[derive(Debug, Clone)]
pub struct Topology {
    pub dofs_per_element: usize,
    pub points_per_element: usize,
    element_dofs: Vec<usize>,
    dof_elements: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(n_dofs: usize, dofs_per_element: usize, points_per_element: usize, element_dofs: Vec<usize>) -> Self {
        assert_eq!(element_dofs.len() % dofs_per_element, 0);
        let mut dof_elements = vec![Vec::new(); n_dofs];
        for (e, dofs) in element_dofs.chunks(dofs_per_element).enumerate() {
            for &d in dofs {
                if dof_elements[d].last() != Some(&e) {
                    dof_elements[d].push(e);
                }
            }
        }
        Topology { dofs_per_element, points_per_element, element_dofs, dof_elements }
    }

    pub fn n_elements(&self) -> usize {
        self.element_dofs.len() / self.dofs_per_element
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.element_dofs[e * self.dofs_per_element..(e + 1) * self.dofs_per_element]
    }

    pub fn dof_elements(&self, dof: usize) -> &[usize] {
        &self.dof_elements[dof]
    }
}

/// Semi-discrete nonlinear system `M dy/dt + A y = f(y, t)`.
#[derive(Clone)]
pub struct FomProblem {
    pub kind: ProblemKind,
    pub state_dim: usize,
    pub mass: Matrix,
    pub linear_op: Matrix,
    pub quadrature: FullQuadratureRule,
    pub initial_state: Vector,
    pub parameter: f64,
    pub fields: Vec<FieldSpan>,
    /// Direction whose mass-weighted content the dynamics conserve, if any.
    pub conserved_direction: Option<Vector>,
    pub topology: Topology,
    physics: Arc<dyn ElementPhysics>,
}

impl fmt::Debug for FomProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FomProblem")
            .field("kind", &self.kind)
            .field("state_dim", &self.state_dim)
            .field("n_elements", &self.topology.n_elements())
            .field("n_points", &self.quadrature.n_points())
            .field("parameter", &self.parameter)
            .finish()
    }
}

impl FomProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ProblemKind,
        mass: Matrix,
        linear_op: Matrix,
        quadrature: FullQuadratureRule,
        initial_state: Vector,
        parameter: f64,
        fields: Vec<FieldSpan>,
        topology: Topology,
        physics: Arc<dyn ElementPhysics>,
    ) -> Result<Self> {
        let n = initial_state.len();
        if mass.shape() != (n, n) || linear_op.shape() != (n, n) {
            return Err(Error::dim("mass/linear operator shape differs from the state dimension"));
        }
        let mut covered = 0;
        for f in &fields {
            if f.offset != covered {
                return Err(Error::invalid(format!("field '{}' does not tile the state", f.name)));
            }
            covered += f.len;
        }
        if covered != n {
            return Err(Error::invalid("fields do not cover the state"));
        }
        if mass.clone().cholesky().is_none() {
            return Err(Error::invalid("mass matrix is not symmetric positive definite"));
        }
        let k = quadrature.n_points();
        if k != topology.n_elements() * topology.points_per_element {
            return Err(Error::dim("quadrature layout differs from the topology"));
        }
        Ok(FomProblem {
            kind,
            state_dim: n,
            mass,
            linear_op,
            quadrature,
            initial_state,
            parameter,
            fields,
            conserved_direction: None,
            topology,
            physics,
        })
    }

    pub fn n_points(&self) -> usize {
        self.quadrature.n_points()
    }

    pub fn n_elements(&self) -> usize {
        self.topology.n_elements()
    }

    pub fn point_element(&self, k: usize) -> usize {
        k / self.topology.points_per_element
    }

    fn check_state(&self, state: &Vector) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::dim(format!("state length {} (expected {})", state.len(), self.state_dim)));
        }
        ensure_finite_vector(state, "state")
    }

    fn gather(&self, state: &Vector, e: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.topology.element_dofs(e).iter().map(|&d| state[d]));
    }

    /// Adds `Σ_k ρ_k η(·, φ_a, x_k)` over the points of `elements` into `out`.
    pub(crate) fn assemble_elements(&self, state: &Vector, t: f64, elements: &[usize], out: &mut Vector) {
        let nd = self.topology.dofs_per_element;
        let q = self.topology.points_per_element;
        let mut local = Vec::with_capacity(nd);
        let mut buf = vec![0.0; nd];
        for &e in elements {
            self.gather(state, e, &mut local);
            let dofs = self.topology.element_dofs(e);
            for lp in 0..q {
                let w = self.quadrature.weights[e * q + lp];
                self.physics.integrand(e, lp, &local, t, &mut buf);
                for (a, &d) in dofs.iter().enumerate() {
                    out[d] += w * buf[a];
                }
            }
        }
    }

    /// Full-rule force vector `f(y, t)`.
    pub fn eval_force_full(&self, state: &Vector, t: f64) -> Result<Vector> {
        self.check_state(state)?;
        let mut out = Vector::zeros(self.state_dim);
        let all: Vec<usize> = (0..self.n_elements()).collect();
        self.assemble_elements(state, t, &all, &mut out);
        Ok(out)
    }

    /// Force entries at `indices`, assembling only the elements touching them.
    pub fn eval_force_entries(&self, state: &Vector, t: f64, indices: &[usize]) -> Result<Vector> {
        self.check_state(state)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.state_dim) {
            return Err(Error::invalid(format!("index {bad} out of range")));
        }
        let elements: Vec<usize> = self.sample_mesh_from_indices(indices).into_iter().collect();
        let mut out = Vector::zeros(self.state_dim);
        self.assemble_elements(state, t, &elements, &mut out);
        Ok(Vector::from_iterator(indices.len(), indices.iter().map(|&i| out[i])))
    }

    /// Raw local integrand values at point `k`, aligned with the element dofs.
    pub fn point_integrand(&self, state: &Vector, t: f64, k: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        if k >= self.n_points() {
            return Err(Error::invalid(format!("quadrature point {k} out of range")));
        }
        let e = self.point_element(k);
        let mut local = Vec::new();
        self.gather(state, e, &mut local);
        let mut out = vec![0.0; self.topology.dofs_per_element];
        self.physics.integrand(e, k % self.topology.points_per_element, &local, t, &mut out);
        Ok(out)
    }

    /// `Σ_a η(·, φ_a, x_k) Ψ[dof_a, :]`, the integrand at point `k` contracted
    /// against the rows of `psi`.
    pub fn eval_integrand_contracted(&self, state: &Vector, t: f64, k: usize, psi: &Matrix) -> Result<Vector> {
        if psi.nrows() != self.state_dim {
            return Err(Error::dim("basis rows differ from the state dimension"));
        }
        let raw = self.point_integrand(state, t, k)?;
        let dofs = self.topology.element_dofs(self.point_element(k));
        let mut out = Vector::zeros(psi.ncols());
        for (a, &d) in dofs.iter().enumerate() {
            if raw[a] != 0.0 {
                out.axpy(raw[a], &psi.row(d).transpose(), 1.0);
            }
        }
        Ok(out)
    }

    /// Contracted integrands for a batch of points, skipping validation.
    pub(crate) fn contracted_points(&self, state: &Vector, t: f64, points: &[usize], weights: &[f64], psi: &Matrix, out: &mut Vector) {
        let nd = self.topology.dofs_per_element;
        let q = self.topology.points_per_element;
        let mut local = Vec::with_capacity(nd);
        let mut buf = vec![0.0; nd];
        let mut last_element = usize::MAX;
        for (&k, &w) in points.iter().zip(weights) {
            let e = k / q;
            if e != last_element {
                self.gather(state, e, &mut local);
                last_element = e;
            }
            self.physics.integrand(e, k % q, &local, t, &mut buf);
            for (a, &d) in self.topology.element_dofs(e).iter().enumerate() {
                let c = w * buf[a];
                if c != 0.0 {
                    for j in 0..psi.ncols() {
                        out[j] += c * psi[(d, j)];
                    }
                }
            }
        }
    }

    /// Dense Jacobian `∂f/∂y`.
    pub fn force_jacobian(&self, state: &Vector, t: f64) -> Result<Matrix> {
        self.check_state(state)?;
        let nd = self.topology.dofs_per_element;
        let q = self.topology.points_per_element;
        let mut jac = Matrix::zeros(self.state_dim, self.state_dim);
        let mut local = Vec::with_capacity(nd);
        let mut buf = vec![0.0; nd * nd];
        for e in 0..self.n_elements() {
            self.gather(state, e, &mut local);
            let dofs = self.topology.element_dofs(e);
            for lp in 0..q {
                let w = self.quadrature.weights[e * q + lp];
                self.physics.integrand_jacobian(e, lp, &local, t, &mut buf);
                for (a, &da) in dofs.iter().enumerate() {
                    for (b, &db) in dofs.iter().enumerate() {
                        jac[(da, db)] += w * buf[a * nd + b];
                    }
                }
            }
        }
        Ok(jac)
    }

    /// Elements adjacent to any of the given degrees of freedom.
    pub fn sample_mesh_from_indices(&self, indices: &[usize]) -> BTreeSet<usize> {
        indices.iter().flat_map(|&d| self.topology.dof_elements(d).iter().cloned()).collect()
    }

    /// Every degree of freedom of the given elements.
    pub fn element_closure(&self, elements: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        elements.into_iter().flat_map(|e| self.topology.element_dofs(e).iter().cloned()).collect()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpan> {
        self.fields.iter().find(|f| f.name == name)
    }
}
