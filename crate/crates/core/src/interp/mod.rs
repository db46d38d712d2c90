//! Gappy-POD interpolation hyper-reduction.
//!
//! A force basis `Ξ` (orthonormal, `N × r_f`) and a set of sampled rows `Z`
//! define the oblique projector `P = Ξ (ZᵀΞ)⁺ Zᵀ`. The samplers here choose
//! `Z`; [`projection_error_diagnostics`] measures how well `P` does on a
//! given vector against the classical bound and error identity.

mod deim;
mod gappy;
mod sopt;

pub use deim::{deim_oversampled, deim_oversampled_traced, DeimStep};
pub use gappy::gappypod_e;
pub use sopt::{s_measure, sopt};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pseudoinverse, thin_svd, Matrix, Vector, DEFAULT_PINV_CUTOFF};
use crate::pod::{truncate_for_energy, SnapshotMatrix};

/// Orthonormal basis for the nonlinear force snapshots.
#[derive(Debug, Clone)]
pub struct ForceBasis {
    pub basis: Matrix,
    pub singular_values: Vector,
}

impl ForceBasis {
    pub fn new(basis: Matrix, singular_values: Vector) -> Self {
        ForceBasis { basis, singular_values }
    }

    /// POD of force snapshots, truncated to reach `target_er`.
    pub fn from_snapshots(forces: &SnapshotMatrix, target_er: f64) -> Result<Self> {
        let svd = thin_svd(&forces.data)?;
        let r = truncate_for_energy(&svd.sigma, target_er)?;
        Ok(ForceBasis { basis: svd.u.columns(0, r).into_owned(), singular_values: svd.sigma })
    }

    pub fn rows(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Rows of `Ξ` at the sampled indices: `ZᵀΞ`.
    pub fn sampled(&self, indices: &[usize]) -> Matrix {
        Matrix::from_fn(indices.len(), self.rank(), |i, j| self.basis[(indices[i], j)])
    }
}

/// Index-selection algorithm for gappy sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Deim,
    QdeimE,
    Sopt,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Deim, SamplerKind::QdeimE, SamplerKind::Sopt];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Deim => "deim",
            SamplerKind::QdeimE => "qdeim_e",
            SamplerKind::Sopt => "sopt",
        }
    }

    pub fn select(self, xi: &ForceBasis, n_f: usize) -> Result<SampleIndexSet> {
        match self {
            SamplerKind::Deim => deim_oversampled(xi, n_f),
            SamplerKind::QdeimE => gappypod_e(xi, n_f),
            SamplerKind::Sopt => sopt(xi, n_f),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deim" => Ok(SamplerKind::Deim),
            "qdeim_e" | "qdeim" | "gappypod_e" => Ok(SamplerKind::QdeimE),
            "sopt" => Ok(SamplerKind::Sopt),
            other => Err(Error::invalid(format!("unknown sampler '{other}'"))),
        }
    }
}

/// Ordered distinct sampled row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleIndexSet {
    pub indices: Vec<usize>,
    pub r_f: usize,
    pub method: SamplerKind,
}

impl SampleIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Common precondition checks for the samplers.
pub(crate) fn check_sampler_input(xi: &ForceBasis, n_f: usize) -> Result<()> {
    let (n, r) = xi.basis.shape();
    if r == 0 {
        return Err(Error::invalid("force basis has no columns"));
    }
    if n_f < r {
        return Err(Error::invalid(format!("n_f = {n_f} is smaller than r_f = {r}")));
    }
    if n_f > n {
        return Err(Error::invalid(format!("n_f = {n_f} exceeds the {n} available rows")));
    }
    Ok(())
}

/// Oblique projector data needed online.
#[derive(Debug, Clone)]
pub struct ObliqueProjector {
    pub force_basis: ForceBasis,
    pub samples: SampleIndexSet,
    /// `(ZᵀΞ)⁺`, `r_f × n_f`.
    pub sampled_pinv: Matrix,
    /// `Ψᵀ Ξ (ZᵀΞ)⁺`, `r_y × n_f`, when a state basis was supplied.
    pub contracted: Option<Matrix>,
    /// `ZᵀΞ` lacks full column rank.
    pub rank_deficient: bool,
}

impl ObliqueProjector {
    /// `P f = Ξ (ZᵀΞ)⁺ f_Z` from the sampled entries only.
    pub fn reconstruct(&self, sampled_values: &Vector) -> Vector {
        &self.force_basis.basis * (&self.sampled_pinv * sampled_values)
    }
}

pub fn build_projector(xi: &ForceBasis, z: &SampleIndexSet, psi: Option<&Matrix>) -> Result<ObliqueProjector> {
    let n = xi.rows();
    if let Some(&bad) = z.indices.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("sample index {bad} out of range for {n} rows")));
    }
    let sampled = xi.sampled(&z.indices);
    let sampled_pinv = pseudoinverse(&sampled, DEFAULT_PINV_CUTOFF)?;
    let rank = if sampled.nrows() == 0 { 0 } else { thin_svd(&sampled)?.rank(DEFAULT_PINV_CUTOFF) };
    let rank_deficient = rank < xi.rank();
    if rank_deficient {
        log::warn!("sampled force basis has rank {rank} < r_f = {}", xi.rank());
    }
    let contracted = match psi {
        Some(psi) => {
            if psi.nrows() != n {
                return Err(Error::dim(format!("state basis has {} rows, force basis {n}", psi.nrows())));
            }
            Some(psi.transpose() * &xi.basis * &sampled_pinv)
        }
        None => None,
    };
    Ok(ObliqueProjector { force_basis: xi.clone(), samples: z.clone(), sampled_pinv, contracted, rank_deficient })
}

/// Oblique projection error of one vector together with the quantities of
/// the classical interpolation error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiagnostics {
    /// `‖(I − P) f‖₂`.
    pub error: f64,
    /// `‖(ZᵀΞ)⁺‖₂ · ‖(I − ΞΞᵀ) f‖₂`.
    pub bound: f64,
    /// `‖(I − ΞΞᵀ) f‖₂`.
    pub orthogonal_error: f64,
    /// `‖ε(f, Z)‖₂`.
    pub epsilon_norm: f64,
    pub bound_holds: bool,
    /// `error² = orthogonal_error² + epsilon_norm²` within 1e-8 relative.
    pub identity_holds: bool,
    /// Relative mismatch of the identity.
    pub identity_defect: f64,
}

/// Relative tolerance for the projection error identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

pub fn projection_error_diagnostics(xi: &ForceBasis, z: &SampleIndexSet, f: &Vector) -> Result<ProjectionDiagnostics> {
    let n = xi.rows();
    if f.len() != n {
        return Err(Error::dim(format!("vector length {} for a basis with {n} rows", f.len())));
    }
    let sampled = xi.sampled(&z.indices);
    let pinv = pseudoinverse(&sampled, DEFAULT_PINV_CUTOFF)?;
    let f_z = Vector::from_iterator(z.len(), z.indices.iter().map(|&i| f[i]));

    let pf = &xi.basis * (&pinv * &f_z);
    let error = (f - &pf).norm();

    let coeffs = xi.basis.transpose() * f;
    let f_perp = f - &xi.basis * &coeffs;
    let orthogonal_error = f_perp.norm();
    let pinv_norm = if pinv.is_empty() { 0.0 } else { thin_svd(&pinv)?.sigma[0] };
    let bound = pinv_norm * orthogonal_error;

    // ε = ((ZᵀΞ)ᵀ ZᵀΞ)⁻¹ (ZᵀΞ)ᵀ Zᵀ (I − ΞΞᵀ) f through the normal equations.
    let perp_z = Vector::from_iterator(z.len(), z.indices.iter().map(|&i| f_perp[i]));
    let gram = sampled.transpose() * &sampled;
    let rhs = sampled.transpose() * perp_z;
    let epsilon = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => pinv_normal(&gram)? * rhs,
    };
    let epsilon_norm = epsilon.norm();

    let lhs = error * error;
    let rhs_sq = orthogonal_error * orthogonal_error + epsilon_norm * epsilon_norm;
    let scale = lhs.max(rhs_sq);
    let identity_defect = if scale == 0.0 { 0.0 } else { (lhs - rhs_sq).abs() / scale };
    let slack = 1e-12 * f.norm();
    Ok(ProjectionDiagnostics {
        error,
        bound,
        orthogonal_error,
        epsilon_norm,
        bound_holds: error <= bound + slack,
        identity_holds: identity_defect <= IDENTITY_TOLERANCE || (lhs.sqrt() - rhs_sq.sqrt()).abs() <= slack,
        identity_defect,
    })
}

fn pinv_normal(gram: &Matrix) -> Result<Matrix> {
    pseudoinverse(gram, DEFAULT_PINV_CUTOFF)
}
