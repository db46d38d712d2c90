//! Snapshot matrices, POD bases and energy-based truncation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{thin_svd, Matrix, Vector};

/// Residual-energy value reported when the basis captures all snapshot energy.
pub const ENERGY_RESIDUAL_CAP: f64 = 16.0;

/// How the snapshot offset is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum OffsetMode {
    Zero,
    FirstSnapshot,
    Mean,
    /// Caller-supplied offset, e.g. a per-field mix of the modes above.
    Given(Vector),
}

/// Column-stacked states minus an offset.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub data: Matrix,
    pub offset: Vector,
    pub time_stamps: Vec<f64>,
    pub parameter_tags: Vec<String>,
}

impl SnapshotMatrix {
    pub fn state_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Snapshot `s` with the offset added back.
    pub fn state(&self, s: usize) -> Vector {
        self.data.column(s) + &self.offset
    }

    /// Concatenates snapshot sets that share an offset.
    pub fn concat(parts: &[SnapshotMatrix]) -> Result<SnapshotMatrix> {
        let first = parts.first().ok_or_else(|| Error::invalid("no snapshot sets to merge"))?;
        let n = first.state_dim();
        let mut cols = 0;
        for p in parts {
            if p.state_dim() != n {
                return Err(Error::dim(format!("snapshot sets of dimension {n} and {}", p.state_dim())));
            }
            if p.offset != first.offset {
                return Err(Error::invalid("snapshot sets use different offsets"));
            }
            cols += p.n_snapshots();
        }
        let mut data = Matrix::zeros(n, cols);
        let mut at = 0;
        let mut time_stamps = Vec::with_capacity(cols);
        let mut parameter_tags = Vec::with_capacity(cols);
        for p in parts {
            data.columns_mut(at, p.n_snapshots()).copy_from(&p.data);
            at += p.n_snapshots();
            time_stamps.extend_from_slice(&p.time_stamps);
            parameter_tags.extend(p.parameter_tags.iter().cloned());
        }
        Ok(SnapshotMatrix { data, offset: first.offset.clone(), time_stamps, parameter_tags })
    }
}

/// Builds a snapshot matrix; every state must have the same length.
pub fn assemble_snapshots(states: &[Vector], offset_mode: &OffsetMode) -> Result<SnapshotMatrix> {
    let first = states.first().ok_or_else(|| Error::invalid("empty snapshot sequence"))?;
    let n = first.len();
    if let Some((i, s)) = states.iter().enumerate().find(|(_, s)| s.len() != n) {
        return Err(Error::dim(format!("snapshot {i} has length {} (expected {n})", s.len())));
    }
    let offset = match offset_mode {
        OffsetMode::Zero => Vector::zeros(n),
        OffsetMode::FirstSnapshot => first.clone(),
        OffsetMode::Mean => states.iter().fold(Vector::zeros(n), |acc, s| acc + s) / states.len() as f64,
        OffsetMode::Given(v) => {
            if v.len() != n {
                return Err(Error::dim(format!("offset length {} for states of length {n}", v.len())));
            }
            v.clone()
        }
    };
    let data = Matrix::from_fn(n, states.len(), |i, j| states[j][i] - offset[i]);
    Ok(SnapshotMatrix {
        data,
        offset,
        time_stamps: (0..states.len()).map(|i| i as f64).collect(),
        parameter_tags: vec![String::new(); states.len()],
    })
}

/// Same as [`assemble_snapshots`] but records time stamps and a parameter tag.
pub fn assemble_tagged(states: &[Vector], times: &[f64], tag: &str, offset_mode: &OffsetMode) -> Result<SnapshotMatrix> {
    if times.len() != states.len() {
        return Err(Error::dim(format!("{} time stamps for {} states", times.len(), states.len())));
    }
    let mut x = assemble_snapshots(states, offset_mode)?;
    x.time_stamps = times.to_vec();
    x.parameter_tags = vec![tag.to_string(); states.len()];
    Ok(x)
}

/// Left singular vectors and spectrum of the snapshot data.
pub fn compute_basis(x: &SnapshotMatrix) -> Result<(Matrix, Vector)> {
    let svd = thin_svd(&x.data)?;
    Ok((svd.u, svd.sigma))
}

/// Orthonormal reduced basis with its offset and the spectrum it came from.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub basis: Matrix,
    pub singular_values: Vector,
    pub offset: Vector,
    pub retained: usize,
}

impl ReducedBasis {
    /// Keeps the leading `r` columns of `u`.
    pub fn truncate(u: &Matrix, sigma: &Vector, offset: Vector, r: usize) -> Result<Self> {
        if r == 0 || r > u.ncols() {
            return Err(Error::invalid(format!("cannot retain {r} of {} modes", u.ncols())));
        }
        if offset.len() != u.nrows() {
            return Err(Error::dim("offset length differs from basis rows"));
        }
        Ok(ReducedBasis { basis: u.columns(0, r).into_owned(), singular_values: sigma.clone(), offset, retained: r })
    }

    /// POD of a snapshot matrix truncated to reach `target_er`.
    pub fn from_snapshots(x: &SnapshotMatrix, target_er: f64) -> Result<Self> {
        let (u, sigma) = compute_basis(x)?;
        let r = truncate_for_energy(&sigma, target_er)?;
        Self::truncate(&u, &sigma, x.offset.clone(), r)
    }

    /// Wraps an arbitrary orthonormal matrix (e.g. the identity).
    pub fn from_orthonormal(basis: Matrix, offset: Vector) -> Self {
        let r = basis.ncols();
        ReducedBasis { basis, singular_values: Vector::from_element(r, 1.0), offset, retained: r }
    }

    pub fn full_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `offset + Ψ ŷ`.
    pub fn lift(&self, y_hat: &Vector) -> Vector {
        &self.offset + &self.basis * y_hat
    }

    /// `Ψᵀ (y − offset)`.
    pub fn project(&self, y: &Vector) -> Vector {
        self.basis.transpose() * (y - &self.offset)
    }

    /// Prepends `direction` (normalized) and re-orthonormalizes the existing
    /// columns against it, dropping any that become dependent.
    pub fn augmented_with(&self, direction: &Vector) -> Result<Self> {
        let n = self.full_dim();
        if direction.len() != n {
            return Err(Error::dim("augmentation vector length differs from basis rows"));
        }
        let norm = direction.norm();
        if norm == 0.0 {
            return Err(Error::invalid("cannot augment with a zero vector"));
        }
        let mut cols: Vec<Vector> = vec![direction / norm];
        for j in 0..self.dim() {
            let mut v: Vector = self.basis.column(j).into_owned();
            // two passes of Gram–Schmidt
            for _ in 0..2 {
                for c in &cols {
                    let d = c.dot(&v);
                    v.axpy(-d, c, 1.0);
                }
            }
            let nv = v.norm();
            if nv > 1e-10 {
                cols.push(v / nv);
            }
        }
        let basis = Matrix::from_columns(&cols);
        let retained = basis.ncols();
        Ok(ReducedBasis { basis, singular_values: self.singular_values.clone(), offset: self.offset.clone(), retained })
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.basis.transpose() * &self.basis;
        (g - Matrix::identity(self.dim(), self.dim())).abs().max()
    }
}

/// Snapshot energy captured by the leading modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_tot: f64,
    pub e_c: f64,
    /// `−log10(1 − E_c/E_tot)`, capped at [`ENERGY_RESIDUAL_CAP`].
    pub e_r: f64,
    pub r: usize,
}

pub fn energy_residual(sigma: &Vector, r: usize) -> Result<EnergyReport> {
    if r > sigma.len() {
        return Err(Error::invalid(format!("r = {r} exceeds spectrum length {}", sigma.len())));
    }
    if sigma.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::invalid("singular values must be nonnegative"));
    }
    let sq: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let e_tot: f64 = sq.iter().sum();
    if e_tot == 0.0 {
        return Err(Error::NoEnergy);
    }
    let e_c: f64 = sq[..r].iter().sum();
    // The tail sum avoids cancellation in 1 − E_c/E_tot.
    let tail: f64 = sq[r..].iter().sum();
    let frac = tail / e_tot;
    let e_r = if frac <= 0.0 { ENERGY_RESIDUAL_CAP } else { (-frac.log10()).min(ENERGY_RESIDUAL_CAP) };
    Ok(EnergyReport { e_tot, e_c, e_r, r })
}

/// Smallest `r ≥ 1` whose residual energy fraction reaches `target_er`.
pub fn truncate_for_energy(sigma: &Vector, target_er: f64) -> Result<usize> {
    if !(target_er > 0.0) {
        return Err(Error::invalid(format!("target E_r {target_er} must be > 0")));
    }
    if sigma.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    for r in 1..=sigma.len() {
        if energy_residual(sigma, r)?.e_r >= target_er {
            return Ok(r);
        }
    }
    Ok(sigma.len())
}
