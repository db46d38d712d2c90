use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eqp::DEFAULT_EQP_TOL;
use crate::error::{Error, Result};
use crate::fom::{bar_reference_offset, make_hyperelastic_bar_with, make_nonlinear_diffusion, BarMaterial, FomProblem, ProblemKind};
use crate::interp::SamplerKind;
use crate::numerics::Vector;
use crate::pod::OffsetMode;
use crate::rom::{ErrorNorm, DEFAULT_NEWTON_TOL};

/// Problem description: `{"problem", "nx", "ny", "mu", "dt", "t_final"}`
/// plus the bar's element count and material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub problem: ProblemKind,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_nx")]
    pub ny: usize,
    #[serde(default = "default_n_elem")]
    pub n_elem: usize,
    pub mu: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub material: BarMaterial,
}

fn default_nx() -> usize {
    16
}

fn default_n_elem() -> usize {
    64
}

impl ProblemConfig {
    pub fn diffusion(nx: usize, ny: usize, mu: f64) -> Self {
        ProblemConfig { problem: ProblemKind::Diffusion, nx, ny, n_elem: default_n_elem(), mu, dt: None, t_final: None, material: BarMaterial::default() }
    }

    pub fn bar(n_elem: usize, mu: f64) -> Self {
        ProblemConfig { problem: ProblemKind::Bar, nx: default_nx(), ny: default_nx(), n_elem, mu, dt: None, t_final: None, material: BarMaterial::default() }
    }

    /// Time step, defaulting to 1e-3 (diffusion) or 1e-2 (bar).
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(match self.problem {
            ProblemKind::Diffusion => 1e-3,
            ProblemKind::Bar => 1e-2,
        })
    }

    /// Final time, defaulting to 0.1 (diffusion) or 5 (bar).
    pub fn t_final(&self) -> f64 {
        self.t_final.unwrap_or(match self.problem {
            ProblemKind::Diffusion => 0.1,
            ProblemKind::Bar => 5.0,
        })
    }

    pub fn n_steps(&self) -> Result<usize> {
        let (dt, t) = (self.dt(), self.t_final());
        if !(dt > 0.0 && t >= 0.0) {
            return Err(Error::invalid(format!("dt = {dt}, t_final = {t}")));
        }
        let n = (t / dt).round();
        if (n * dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::invalid(format!("t_final = {t} is not a multiple of dt = {dt}")));
        }
        if n < 1.0 {
            return Err(Error::invalid("zero-length run requested"));
        }
        Ok(n as usize)
    }

    pub fn default_solver(&self) -> SolverKind {
        match self.problem {
            ProblemKind::Diffusion => SolverKind::BackwardEuler,
            ProblemKind::Bar => SolverKind::Rk4,
        }
    }

    pub fn build(&self, mu: f64) -> Result<FomProblem> {
        match self.problem {
            ProblemKind::Diffusion => make_nonlinear_diffusion(self.nx, self.ny, mu),
            ProblemKind::Bar => make_hyperelastic_bar_with(self.n_elem, mu, self.material),
        }
    }

    /// Snapshot offset: zero for diffusion, the reference map `(0, X)` for
    /// the bar.
    pub fn offset_mode(&self, fom: &FomProblem) -> OffsetMode {
        match self.problem {
            ProblemKind::Diffusion => OffsetMode::Zero,
            ProblemKind::Bar => OffsetMode::Given(bar_reference_offset(fom)),
        }
    }

    pub fn offset(&self, fom: &FomProblem) -> Vector {
        match self.offset_mode(fom) {
            OffsetMode::Given(v) => v,
            _ => Vector::zeros(fom.state_dim),
        }
    }

    /// Short identifier used in file names and records.
    pub fn id(&self) -> String {
        match self.problem {
            ProblemKind::Diffusion => format!("diffusion_{}x{}", self.nx, self.ny),
            ProblemKind::Bar => format!("bar_{}", self.n_elem),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Reproductive,
    Predictive,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Reproductive => "reproductive",
            RunMode::Predictive => "predictive",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reproductive" => Ok(RunMode::Reproductive),
            "predictive" => Ok(RunMode::Predictive),
            _ => Err(Error::invalid(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    BackwardEuler,
    Rk4,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::BackwardEuler => "backward_euler",
            SolverKind::Rk4 => "rk4",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backward_euler" | "be" => Ok(SolverKind::BackwardEuler),
            "rk4" => Ok(SolverKind::Rk4),
            _ => Err(Error::invalid(format!("unknown solver '{s}'"))),
        }
    }
}

/// Online hyper-reduction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Deim,
    QdeimE,
    Sopt,
    Eqp,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::None, Method::Deim, Method::QdeimE, Method::Sopt, Method::Eqp];

    pub fn sampler(self) -> Option<SamplerKind> {
        match self {
            Method::Deim => Some(SamplerKind::Deim),
            Method::QdeimE => Some(SamplerKind::QdeimE),
            Method::Sopt => Some(SamplerKind::Sopt),
            Method::None | Method::Eqp => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Deim => "deim",
            Method::QdeimE => "qdeim_e",
            Method::Sopt => "sopt",
            Method::Eqp => "eqp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// One experiment: problem, training set, reduction settings and output
/// location. `mu` is the online (test) parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub problem: ProblemConfig,
    /// Training parameters; defaults to `[mu]`.
    #[serde(default)]
    pub train_mu: Vec<f64>,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Target residual energy `E_r` of the state basis.
    #[serde(default = "default_er")]
    pub er: f64,
    /// Target `E_r` of the force basis; defaults to `er`.
    #[serde(default)]
    pub force_er: Option<f64>,
    /// Number of sampled indices `n_f`; defaults to `2·r_f`.
    #[serde(default)]
    pub nsr: Option<usize>,
    #[serde(default = "default_eqp_tol")]
    pub eqp_tol: f64,
    #[serde(default)]
    pub maxnnls: Option<usize>,
    /// Use every `eqp_stride`-th training snapshot for EQP constraints.
    #[serde(default = "one")]
    pub eqp_stride: usize,
    #[serde(default = "one")]
    pub nwin: usize,
    #[serde(default)]
    pub solver: Option<SolverKind>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default)]
    pub norm: ErrorNorm,
    /// Add the constant vector to diffusion bases so mass is conserved.
    #[serde(default = "yes")]
    pub augment_constant: bool,
    #[serde(default = "default_repeats")]
    pub timing_repeats: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_method() -> Method {
    Method::None
}
fn default_er() -> f64 {
    4.0
}
fn default_eqp_tol() -> f64 {
    DEFAULT_EQP_TOL
}
fn default_newton_tol() -> f64 {
    DEFAULT_NEWTON_TOL
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_repeats() -> usize {
    3
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("hyperred-out")
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig) -> Self {
        let mut cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({ "problem": problem.problem, "mu": problem.mu }))
            .expect("defaults deserialize");
        cfg.problem = problem;
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Format { path: path.display().to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn training_set(&self) -> Vec<f64> {
        if self.train_mu.is_empty() {
            vec![self.problem.mu]
        } else {
            self.train_mu.clone()
        }
    }

    pub fn solver(&self) -> SolverKind {
        self.solver.unwrap_or_else(|| self.problem.default_solver())
    }

    pub fn force_er(&self) -> f64 {
        self.force_er.unwrap_or(self.er)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.n_steps()?;
        if !(self.er > 0.0) || self.force_er.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::invalid("energy targets must be positive"));
        }
        if !(self.eqp_tol > 0.0) {
            return Err(Error::invalid("eqp_tol must be positive"));
        }
        if self.nwin == 0 {
            return Err(Error::invalid("nwin must be at least 1"));
        }
        if self.timing_repeats == 0 {
            return Err(Error::invalid("timing_repeats must be at least 1"));
        }
        let train = self.training_set();
        let has_test = train.contains(&self.problem.mu);
        match self.mode {
            RunMode::Reproductive if !has_test => {
                Err(Error::invalid(format!("reproductive run at mu = {} needs it in train_mu", self.problem.mu)))
            }
            RunMode::Predictive if has_test => {
                Err(Error::invalid(format!("predictive run at mu = {} must exclude it from train_mu", self.problem.mu)))
            }
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON of every field that affects results.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("timing_repeats");
        }
        // serde_json maps are ordered, so the text is canonical
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
