use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ElementPhysics, FieldSpan, FomProblem, FullQuadratureRule, ProblemKind, Topology};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Bar length in reference coordinates.
pub const BAR_LENGTH: f64 = 8.0;

const GAUSS_3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarMaterial {
    pub rho: f64,
    pub nu: f64,
    pub bulk: f64,
    pub g: f64,
    pub eta: f64,
}

impl Default for BarMaterial {
    fn default() -> Self {
        BarMaterial { rho: 1.0, nu: 0.25, bulk: 5.0, g: 1.0, eta: 0.01 }
    }
}

impl BarMaterial {
    /// First Piola stress `P(J) = ν(J − 1/J) + (K/g²) J (J − g)`.
    pub fn stress(&self, j: f64) -> f64 {
        self.nu * (j - 1.0 / j) + self.bulk / (self.g * self.g) * j * (j - self.g)
    }

    pub fn stress_derivative(&self, j: f64) -> f64 {
        self.nu * (1.0 + 1.0 / (j * j)) + self.bulk / (self.g * self.g) * (2.0 * j - self.g)
    }
}

fn quadratic(xi: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)],
        [xi - 0.5, -2.0 * xi, xi + 0.5],
    )
}

/// Elastic internal force of the 1D bar. Local dofs are the three element
/// velocities followed by the three element positions; only the velocity
/// rows receive force, and the clamped velocity at `X = 0` receives none.
#[derive(Debug, Clone)]
pub struct BarPhysics {
    pub material: BarMaterial,
    /// Physical shape derivatives per local point.
    dn: [[f64; 3]; 3],
}

impl BarPhysics {
    fn strain(&self, q: usize, local: &[f64]) -> f64 {
        (0..3).map(|b| self.dn[q][b] * local[3 + b]).sum()
    }
}

impl ElementPhysics for BarPhysics {
    fn integrand(&self, element: usize, q: usize, local: &[f64], _t: f64, out: &mut [f64]) {
        let stress = self.material.stress(self.strain(q, local));
        for a in 0..3 {
            out[a] = -stress * self.dn[q][a];
            out[3 + a] = 0.0;
        }
        if element == 0 {
            out[0] = 0.0;
        }
    }

    fn integrand_jacobian(&self, element: usize, q: usize, local: &[f64], _t: f64, out: &mut [f64]) {
        let dp = self.material.stress_derivative(self.strain(q, local));
        out.iter_mut().for_each(|v| *v = 0.0);
        let first = if element == 0 { 1 } else { 0 };
        for a in first..3 {
            for b in 0..3 {
                out[a * 6 + 3 + b] = -dp * self.dn[q][a] * self.dn[q][b];
            }
        }
    }
}

/// Hyperelastic bar on `[0, 8]` with default material constants.
pub fn make_hyperelastic_bar(n_elem: usize, mu: f64) -> Result<FomProblem> {
    make_hyperelastic_bar_with(n_elem, mu, BarMaterial::default())
}

/// Hyperelastic bar on `[0, 8]` with quadratic elements.
///
/// State is `(v, x)`: `ρ M₁ dv/dt + η K₁ v = f_P(x)` and `M₁ dx/dt = M₁ v`,
/// with the velocity clamped at `X = 0`. The initial velocity interpolates
/// `−(μ/80) sin(μX)` and the initial position is the reference map.
pub fn make_hyperelastic_bar_with(n_elem: usize, mu: f64, material: BarMaterial) -> Result<FomProblem> {
    if n_elem == 0 {
        return Err(Error::invalid("bar needs at least one element"));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("bar parameter mu = {mu} must be nonnegative")));
    }
    if !(material.rho > 0.0 && material.g > 0.0 && material.eta >= 0.0) {
        return Err(Error::invalid("bar material needs rho > 0, g > 0, eta ≥ 0"));
    }
    let h = BAR_LENGTH / n_elem as f64;
    let n_nodes = 2 * n_elem + 1;
    let n = 2 * n_nodes;

    let mut element_dofs = Vec::with_capacity(6 * n_elem);
    for e in 0..n_elem {
        let nodes = [2 * e, 2 * e + 1, 2 * e + 2];
        element_dofs.extend(nodes);
        element_dofs.extend(nodes.iter().map(|&i| n_nodes + i));
    }
    let topology = Topology::new(n, 6, 3, element_dofs);

    let mut shape = [[0.0; 3]; 3];
    let mut dn = [[0.0; 3]; 3];
    for q in 0..3 {
        let (nq, dq) = quadratic(GAUSS_3[q]);
        shape[q] = nq;
        for a in 0..3 {
            dn[q][a] = dq[a] * 2.0 / h;
        }
    }
    let weights: Vec<f64> = (0..n_elem).flat_map(|_| GAUSS_3_W.iter().map(|w| w * h / 2.0)).collect();

    let mut m1 = Matrix::zeros(n_nodes, n_nodes);
    let mut k1 = Matrix::zeros(n_nodes, n_nodes);
    for e in 0..n_elem {
        for q in 0..3 {
            let w = GAUSS_3_W[q] * h / 2.0;
            for a in 0..3 {
                for b in 0..3 {
                    m1[(2 * e + a, 2 * e + b)] += w * shape[q][a] * shape[q][b];
                    k1[(2 * e + a, 2 * e + b)] += w * dn[q][a] * dn[q][b];
                }
            }
        }
    }

    let mut mass = Matrix::zeros(n, n);
    let mut linear = Matrix::zeros(n, n);
    mass.view_mut((0, 0), (n_nodes, n_nodes)).copy_from(&(&m1 * material.rho));
    mass.view_mut((n_nodes, n_nodes), (n_nodes, n_nodes)).copy_from(&m1);
    linear.view_mut((0, 0), (n_nodes, n_nodes)).copy_from(&(&k1 * material.eta));
    linear.view_mut((n_nodes, 0), (n_nodes, n_nodes)).copy_from(&(-&m1));
    // clamp v at X = 0: decouple its row and column, keep the diagonal
    let diag = mass[(0, 0)];
    mass.row_mut(0).fill(0.0);
    mass.column_mut(0).fill(0.0);
    mass[(0, 0)] = diag;
    linear.row_mut(0).fill(0.0);

    let x_ref = |i: usize| i as f64 * h / 2.0;
    let initial_state = Vector::from_fn(n, |i, _| {
        if i < n_nodes {
            if i == 0 {
                0.0
            } else {
                -(mu / 80.0) * (mu * x_ref(i)).sin()
            }
        } else {
            x_ref(i - n_nodes)
        }
    });

    FomProblem::new(
        ProblemKind::Bar,
        mass,
        linear,
        FullQuadratureRule { weights: Vector::from_vec(weights), point_to_element: (0..3 * n_elem).map(|k| k / 3).collect() },
        initial_state,
        mu,
        vec![FieldSpan::new("v", 0, n_nodes), FieldSpan::new("x", n_nodes, n_nodes)],
        topology,
        Arc::new(BarPhysics { material, dn }),
    )
}

/// Reference positions `(0, X)` used as the bar's snapshot offset.
pub fn bar_reference_offset(fom: &FomProblem) -> Vector {
    let n_nodes = fom.state_dim / 2;
    Vector::from_fn(fom.state_dim, |i, _| if i < n_nodes { 0.0 } else { fom.initial_state[i] })
}
