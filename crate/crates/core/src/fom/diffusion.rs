use std::sync::Arc;

use super::{ElementPhysics, FieldSpan, FomProblem, FullQuadratureRule, ProblemKind, Topology};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Bilinear shape functions on `[-1, 1]²`, nodes counterclockwise from
/// `(-1, -1)`.
fn bilinear(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let sx = [-1.0, 1.0, 1.0, -1.0];
    let sy = [-1.0, -1.0, 1.0, 1.0];
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for a in 0..4 {
        n[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sy[a] * eta);
        dn[a] = [0.25 * sx[a] * (1.0 + sy[a] * eta), 0.25 * sy[a] * (1.0 + sx[a] * xi)];
    }
    (n, dn)
}

/// Primal nonlinear diffusion with conductivity `κ(p) = base + slope·p`.
///
/// The integrand for test function `φ_a` is `−κ(p) ∇p·∇φ_a`.
#[derive(Debug, Clone)]
pub struct DiffusionPhysics {
    pub kappa_base: f64,
    pub kappa_slope: f64,
    /// Shape values per local point.
    n: [[f64; 4]; 4],
    /// Physical shape gradients per local point.
    grad: [[[f64; 2]; 4]; 4],
}

impl DiffusionPhysics {
    fn new(hx: f64, hy: f64, kappa_base: f64, kappa_slope: f64) -> Self {
        let mut n = [[0.0; 4]; 4];
        let mut grad = [[[0.0; 2]; 4]; 4];
        for (q, (xi, eta)) in gauss_points_2d().into_iter().enumerate() {
            let (nq, dq) = bilinear(xi, eta);
            n[q] = nq;
            for a in 0..4 {
                grad[q][a] = [dq[a][0] * 2.0 / hx, dq[a][1] * 2.0 / hy];
            }
        }
        DiffusionPhysics { kappa_base, kappa_slope, n, grad }
    }

    fn point_values(&self, q: usize, local: &[f64]) -> (f64, [f64; 2]) {
        let mut p = 0.0;
        let mut g = [0.0; 2];
        for b in 0..4 {
            p += self.n[q][b] * local[b];
            g[0] += self.grad[q][b][0] * local[b];
            g[1] += self.grad[q][b][1] * local[b];
        }
        (p, g)
    }
}

impl ElementPhysics for DiffusionPhysics {
    fn integrand(&self, _element: usize, q: usize, local: &[f64], _t: f64, out: &mut [f64]) {
        let (p, g) = self.point_values(q, local);
        let kappa = self.kappa_base + self.kappa_slope * p;
        for a in 0..4 {
            out[a] = -kappa * (g[0] * self.grad[q][a][0] + g[1] * self.grad[q][a][1]);
        }
    }

    fn integrand_jacobian(&self, _element: usize, q: usize, local: &[f64], _t: f64, out: &mut [f64]) {
        let (p, g) = self.point_values(q, local);
        let kappa = self.kappa_base + self.kappa_slope * p;
        for a in 0..4 {
            let ga = self.grad[q][a];
            let flux_a = g[0] * ga[0] + g[1] * ga[1];
            for b in 0..4 {
                let gb = self.grad[q][b];
                out[a * 4 + b] = -(self.kappa_slope * self.n[q][b] * flux_a + kappa * (gb[0] * ga[0] + gb[1] * ga[1]));
            }
        }
    }
}

/// Tensor Gauss points in element order `(ξ fastest)`.
fn gauss_points_2d() -> [(f64, f64); 4] {
    [(GAUSS_2[0], GAUSS_2[0]), (GAUSS_2[1], GAUSS_2[0]), (GAUSS_2[0], GAUSS_2[1]), (GAUSS_2[1], GAUSS_2[1])]
}

/// Nonlinear diffusion `∂p/∂t = ∇·(κ(p)∇p)`, `κ = 2 + p`, on the unit square
/// with zero-flux boundaries, discretized by `nx × ny` bilinear quads.
///
/// The initial state is the nodal interpolant of the indicator of
/// `max_i |x_i − 0.5| ≤ μ`.
pub fn make_nonlinear_diffusion(nx: usize, ny: usize, mu: f64) -> Result<FomProblem> {
    make_diffusion_with_conductivity(nx, ny, mu, 2.0, 1.0)
}

/// Same as [`make_nonlinear_diffusion`] with `κ(p) = base + slope·p`.
pub fn make_diffusion_with_conductivity(nx: usize, ny: usize, mu: f64, base: f64, slope: f64) -> Result<FomProblem> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("mesh needs at least one element per direction"));
    }
    if !(mu > 0.0 && mu <= 0.5) {
        return Err(Error::invalid(format!("diffusion parameter mu = {mu} outside (0, 0.5]")));
    }
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let n_nodes = (nx + 1) * (ny + 1);
    let node = |i: usize, j: usize| i + (nx + 1) * j;

    let mut element_dofs = Vec::with_capacity(4 * nx * ny);
    for ey in 0..ny {
        for ex in 0..nx {
            element_dofs.extend([node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)]);
        }
    }
    let topology = Topology::new(n_nodes, 4, 4, element_dofs);
    let physics = DiffusionPhysics::new(hx, hy, base, slope);

    let weight = 0.25 * hx * hy;
    let n_el = nx * ny;
    let quadrature = FullQuadratureRule {
        weights: Vector::from_element(4 * n_el, weight),
        point_to_element: (0..4 * n_el).map(|k| k / 4).collect(),
    };

    let mut mass = Matrix::zeros(n_nodes, n_nodes);
    for e in 0..n_el {
        let dofs = topology.element_dofs(e);
        for q in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    mass[(dofs[a], dofs[b])] += weight * physics.n[q][a] * physics.n[q][b];
                }
            }
        }
    }

    let initial_state = Vector::from_fn(n_nodes, |k, _| {
        let (i, j) = (k % (nx + 1), k / (nx + 1));
        let (x, y) = (i as f64 * hx, j as f64 * hy);
        let dist = (x - 0.5).abs().max((y - 0.5).abs());
        if dist <= mu + 1e-12 {
            1.0
        } else {
            0.0
        }
    });

    let mut fom = FomProblem::new(
        ProblemKind::Diffusion,
        mass,
        Matrix::zeros(n_nodes, n_nodes),
        quadrature,
        initial_state,
        mu,
        vec![FieldSpan::new("p", 0, n_nodes)],
        topology,
        Arc::new(physics),
    )?;
    fom.conserved_direction = Some(Vector::from_element(n_nodes, 1.0));
    Ok(fom)
}
