//! Offline, merge, online and report phases. Phases communicate through
//! files under the configured output directory only.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, ProblemConfig, SolverKind};
use super::io::{create_dir, read_json, read_matrix_csv, read_snapshots, read_vector_csv, write_json, write_matrix_csv, write_snapshots, write_vector_csv};
use super::record::{pareto_extract, write_report, ParetoSet, ReportSummary, RunRecord};
use crate::eqp::{build_eqp_rule, strided_times, EqpReport, SparseQuadratureRule};
use crate::error::{Error, Result};
use crate::fom::{fom_backward_euler, fom_rk4, FomProblem, ProblemKind};
use crate::interp::{build_projector, ForceBasis, SampleIndexSet};
use crate::numerics::{thin_svd, Vector};
use crate::pod::{assemble_tagged, energy_residual, truncate_for_energy, EnergyReport, OffsetMode, ReducedBasis, SnapshotMatrix};
use crate::rom::{project_operators, relative_l2_error, solve_windowed, Integrator, ReducedModel, TimeWindowSchedule};

/// Written next to the snapshot files of one FOM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineManifest {
    pub problem: ProblemConfig,
    pub mu: f64,
    pub solver: SolverKind,
    pub dt: f64,
    pub n_steps: usize,
    pub state_dim: usize,
    pub times: Vec<f64>,
    pub wall_time: f64,
    pub newton_iters_total: usize,
    pub states: String,
    pub forces: String,
}

/// Per-window merge artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowArtifacts {
    pub dir: String,
    pub start_step: usize,
    pub end_step: usize,
    pub n_snapshots: usize,
    pub state_energy: Vec<EnergyReport>,
    pub force_energy: Vec<EnergyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeManifest {
    pub problem: ProblemConfig,
    pub train_mu: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub targets: Vec<f64>,
    pub windows: Vec<WindowArtifacts>,
}

fn mu_tag(mu: f64) -> String {
    format!("mu{mu}")
}

fn offline_dir(cfg: &ExperimentConfig, mu: f64) -> PathBuf {
    cfg.output_dir.join("offline").join(cfg.problem.id()).join(mu_tag(mu))
}

fn merge_dir(cfg: &ExperimentConfig) -> PathBuf {
    let train: Vec<String> = cfg.training_set().iter().map(|m| m.to_string()).collect();
    cfg.output_dir.join("merge").join(format!("{}_train{}_w{}_{}", cfg.problem.id(), train.join("-"), cfg.nwin, cfg.solver()))
}

fn online_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("online")
}

/// Every parameter the offline phase must simulate: the training set and the
/// test parameter (kept apart from training data in predictive runs).
pub fn offline_parameters(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut mus = cfg.training_set();
    if !mus.contains(&cfg.problem.mu) {
        mus.push(cfg.problem.mu);
    }
    mus
}

/// Runs the FOM at `mu` and stores states and co-timed forces.
pub fn run_offline_single(cfg: &ExperimentConfig, mu: f64) -> Result<OfflineManifest> {
    let fom = cfg.problem.build(mu)?;
    let dt = cfg.problem.dt();
    let n_steps = cfg.problem.n_steps()?;
    let solver = cfg.solver();
    let traj = match solver {
        SolverKind::BackwardEuler => fom_backward_euler(&fom, dt, n_steps, cfg.newton_tol)?,
        SolverKind::Rk4 => fom_rk4(&fom, dt, n_steps)?,
    };
    let dir = offline_dir(cfg, mu);
    create_dir(&dir)?;
    let tag = mu.to_string();
    let x = assemble_tagged(&traj.states, &traj.times, &tag, &cfg.problem.offset_mode(&fom))?;
    let f = assemble_tagged(&traj.forces, &traj.times, &tag, &OffsetMode::Zero)?;
    write_snapshots(&dir, "states", &x)?;
    write_snapshots(&dir, "forces", &f)?;
    let manifest = OfflineManifest {
        problem: ProblemConfig { mu, ..cfg.problem.clone() },
        mu,
        solver,
        dt,
        n_steps,
        state_dim: fom.state_dim,
        times: traj.times,
        wall_time: traj.wall_time,
        newton_iters_total: traj.newton_iters_total,
        states: "states".into(),
        forces: "forces".into(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!("offline {} mu = {mu}: {} snapshots in {:.3} s", cfg.problem.id(), manifest.times.len(), manifest.wall_time);
    Ok(manifest)
}

/// Offline phase for every parameter of the experiment.
pub fn run_offline(cfg: &ExperimentConfig) -> Result<Vec<OfflineManifest>> {
    cfg.validate()?;
    offline_parameters(cfg).into_iter().map(|mu| run_offline_single(cfg, mu)).collect()
}

/// Loads an offline run that matches the experiment, running it if absent.
fn ensure_offline(cfg: &ExperimentConfig, mu: f64) -> Result<(OfflineManifest, PathBuf)> {
    let dir = offline_dir(cfg, mu);
    let path = dir.join("manifest.json");
    if path.exists() {
        let m: OfflineManifest = read_json(&path)?;
        let expected = ProblemConfig { mu, ..cfg.problem.clone() };
        if m.problem == expected && m.solver == cfg.solver() {
            return Ok((m, dir));
        }
        log::info!("offline run at {} is stale; recomputing", dir.display());
    }
    Ok((run_offline_single(cfg, mu)?, dir))
}

fn load_offline(dir: &Path, m: &OfflineManifest) -> Result<(SnapshotMatrix, SnapshotMatrix)> {
    let tag = m.mu.to_string();
    Ok((read_snapshots(dir, &m.states, &m.times, &tag)?, read_snapshots(dir, &m.forces, &m.times, &tag)?))
}

/// Step boundaries of `nwin` near-equal windows.
pub fn window_steps(n_steps: usize, nwin: usize) -> Vec<usize> {
    let w = nwin.clamp(1, n_steps.max(1));
    (0..=w).map(|i| i * n_steps / w).collect()
}

fn columns(x: &SnapshotMatrix, from: usize, to: usize) -> SnapshotMatrix {
    SnapshotMatrix {
        data: x.data.columns(from, to - from + 1).into_owned(),
        offset: x.offset.clone(),
        time_stamps: x.time_stamps[from..=to].to_vec(),
        parameter_tags: x.parameter_tags[from..=to].to_vec(),
    }
}

/// Merge phase: concatenates the training runs per time window, computes
/// state and force POD modes, and records energy reports for `targets`.
pub fn run_merge(cfg: &ExperimentConfig, targets: &[f64]) -> Result<MergeManifest> {
    cfg.validate()?;
    let train = cfg.training_set();
    let mut runs = Vec::with_capacity(train.len());
    for &mu in &train {
        let (m, dir) = ensure_offline(cfg, mu)?;
        runs.push((load_offline(&dir, &m)?, m));
    }
    let first = &runs[0].1;
    if let Some((_, m)) = runs.iter().find(|(_, m)| m.state_dim != first.state_dim || m.n_steps != first.n_steps) {
        return Err(Error::dim(format!("offline run at mu = {} differs in dimension or length from mu = {}", m.mu, first.mu)));
    }
    let steps = window_steps(first.n_steps, cfg.nwin);
    let dir = merge_dir(cfg);
    create_dir(&dir)?;
    let targets: Vec<f64> = if targets.is_empty() { vec![cfg.er] } else { targets.to_vec() };

    let mut windows = Vec::new();
    for w in 0..steps.len() - 1 {
        let (a, b) = (steps[w], steps[w + 1]);
        let states = SnapshotMatrix::concat(&runs.iter().map(|((x, _), _)| columns(x, a, b)).collect::<Vec<_>>())?;
        let forces = SnapshotMatrix::concat(&runs.iter().map(|((_, f), _)| columns(f, a, b)).collect::<Vec<_>>())?;
        let wdir_name = format!("w{w}");
        let wdir = dir.join(&wdir_name);
        create_dir(&wdir)?;
        let sv = thin_svd(&states.data)?;
        let fv = thin_svd(&forces.data)?;
        write_snapshots(&wdir, "states", &states)?;
        write_json(&wdir.join("times.json"), &states.time_stamps)?;
        write_matrix_csv(&wdir.join("state_modes.csv"), &sv.u)?;
        write_vector_csv(&wdir.join("state_sigma.csv"), &sv.sigma)?;
        write_matrix_csv(&wdir.join("force_modes.csv"), &fv.u)?;
        write_vector_csv(&wdir.join("force_sigma.csv"), &fv.sigma)?;
        let report = |sigma: &Vector| -> Result<Vec<EnergyReport>> {
            targets.iter().map(|&t| energy_residual(sigma, truncate_for_energy(sigma, t)?)).collect()
        };
        windows.push(WindowArtifacts {
            dir: wdir_name,
            start_step: a,
            end_step: b,
            n_snapshots: states.n_snapshots(),
            state_energy: report(&sv.sigma)?,
            force_energy: report(&fv.sigma)?,
        });
    }
    let manifest = MergeManifest { problem: cfg.problem.clone(), train_mu: train, dt: first.dt, n_steps: first.n_steps, targets, windows };
    write_json(&dir.join("merge.json"), &manifest)?;
    Ok(manifest)
}

fn ensure_merge(cfg: &ExperimentConfig) -> Result<(MergeManifest, PathBuf)> {
    let dir = merge_dir(cfg);
    let path = dir.join("merge.json");
    if path.exists() {
        let m: MergeManifest = read_json(&path)?;
        let same_problem = ProblemConfig { mu: 0.0, ..m.problem.clone() } == ProblemConfig { mu: 0.0, ..cfg.problem.clone() };
        if same_problem && m.train_mu == cfg.training_set() {
            return Ok((m, dir));
        }
    }
    Ok((run_merge(cfg, &[])?, dir))
}

/// Everything built for one window before integration.
struct WindowModel {
    model: ReducedModel,
    r_f: Option<usize>,
    eqp: Option<EqpReport>,
}

fn build_window(cfg: &ExperimentConfig, fom: &Arc<FomProblem>, wdir: &Path) -> Result<WindowModel> {
    let u = read_matrix_csv(&wdir.join("state_modes.csv"))?;
    let sigma = read_vector_csv(&wdir.join("state_sigma.csv"))?;
    let offset = read_vector_csv(&wdir.join("states_offset.csv"))?;
    let r = truncate_for_energy(&sigma, cfg.er)?;
    let mut psi = ReducedBasis::truncate(&u, &sigma, offset, r)?;
    if cfg.augment_constant && cfg.problem.problem == ProblemKind::Diffusion {
        if let Some(c) = &fom.conserved_direction {
            psi = psi.augmented_with(c)?;
        }
    }
    let model = project_operators(fom.clone(), psi)?;
    match cfg.method {
        Method::None => Ok(WindowModel { model, r_f: None, eqp: None }),
        Method::Deim | Method::QdeimE | Method::Sopt => {
            let sampler = cfg.method.sampler().expect("interpolation method");
            let fu = read_matrix_csv(&wdir.join("force_modes.csv"))?;
            let fs = read_vector_csv(&wdir.join("force_sigma.csv"))?;
            let r_f = truncate_for_energy(&fs, cfg.force_er())?;
            let xi = ForceBasis::new(fu.columns(0, r_f).into_owned(), fs.clone());
            let n_f = match cfg.nsr {
                Some(n) => n,
                None => (2 * r_f).min(fom.state_dim),
            };
            let z: SampleIndexSet = sampler.select(&xi, n_f)?;
            let projector = build_projector(&xi, &z, Some(&model.basis.basis))?;
            write_json(&wdir.join(format!("samples_{}_er{}_nf{n_f}.json", sampler, cfg.force_er())), &z)?;
            Ok(WindowModel { model: model.with_interpolation(projector)?, r_f: Some(r_f), eqp: None })
        }
        Method::Eqp => {
            let times: Vec<f64> = read_json(&wdir.join("times.json"))?;
            let x = read_snapshots(wdir, "states", &times, "")?;
            let selected = strided_times(x.n_snapshots(), cfg.eqp_stride);
            let (rule, report): (SparseQuadratureRule, EqpReport) = build_eqp_rule(fom, &model.basis, &x, &selected, cfg.eqp_tol, cfg.maxnnls)?;
            write_json(&wdir.join(format!("eqp_er{}_tol{}.json", cfg.er, cfg.eqp_tol)), &rule)?;
            Ok(WindowModel { model: model.with_eqp(rule)?, r_f: None, eqp: Some(report) })
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Name shared by a run's record and its final-state sidecar.
pub fn record_name(cfg: &ExperimentConfig) -> String {
    let nsr = cfg.nsr.map_or("auto".to_string(), |n| n.to_string());
    format!("{}_{}_{}_{}_er{}_nsr{}_tol{}_w{}", cfg.problem.id(), cfg.mode, mu_tag(cfg.problem.mu), cfg.method, cfg.er, nsr, cfg.eqp_tol, cfg.nwin)
}

/// Online phase: builds the hyper-reduced model(s), integrates, and compares
/// against the stored FOM run at the test parameter.
pub fn run_online(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (merge, mdir) = ensure_merge(cfg)?;
    let (reference, rdir) = ensure_offline(cfg, cfg.problem.mu)?;
    if reference.n_steps != merge.n_steps {
        return Err(Error::invalid("reference run and training runs differ in length"));
    }
    let fom = Arc::new(cfg.problem.build(cfg.problem.mu)?);
    let windows: Vec<WindowModel> = merge.windows.iter().map(|w| build_window(cfg, &fom, &mdir.join(&w.dir))).collect::<Result<_>>()?;

    let dt = merge.dt;
    let boundaries: Vec<f64> = std::iter::once(0.0).chain(merge.windows.iter().map(|w| w.end_step as f64 * dt)).collect();
    let schedule = TimeWindowSchedule::new(boundaries, windows.iter().map(|w| w.model.clone()).collect())?;
    let integrator = match cfg.solver() {
        SolverKind::BackwardEuler => Integrator::BackwardEuler { newton_tol: cfg.newton_tol },
        SolverKind::Rk4 => Integrator::Rk4,
    };
    let first = solve_windowed(&schedule, integrator, dt)?;
    let mut samples = vec![first.wall_time];
    for _ in 1..cfg.timing_repeats {
        samples.push(solve_windowed(&schedule, integrator, dt)?.wall_time);
    }
    let rom_time = median(&samples);

    let ref_states = read_snapshots(&rdir, &reference.states, &reference.times, "")?;
    let fom_final = ref_states.state(ref_states.n_snapshots() - 1);
    let error = relative_l2_error(&first.lifted_final, &fom_final, cfg.norm, &fom.fields, Some(&fom.mass))?;

    let record = RunRecord {
        problem: cfg.problem.id(),
        method: cfg.method,
        mode: cfg.mode,
        solver: cfg.solver(),
        mu: cfg.problem.mu,
        train_mu: cfg.training_set(),
        er: cfg.er,
        nwin: windows.len(),
        r_y: windows.iter().map(|w| w.model.dim()).collect(),
        r_f: windows.iter().filter_map(|w| w.r_f).collect(),
        n_points: windows.iter().map(|w| w.model.n_points()).sum(),
        sample_mesh_elements: windows.iter().map(|w| w.model.sample_mesh_elements()).sum(),
        error,
        relative_online_time: rom_time / reference.wall_time.max(f64::MIN_POSITIVE),
        rom_wall_time: rom_time,
        rom_wall_samples: samples,
        fom_wall_time: reference.wall_time,
        eqp: windows.iter().filter_map(|w| w.eqp.clone()).collect(),
        newton_iters_total: first.newton_iters_total,
        config_hash: cfg.hash(),
    };
    let odir = online_dir(cfg);
    create_dir(&odir)?;
    let name = record_name(cfg);
    write_json(&odir.join(format!("{name}.json")), &record)?;
    write_vector_csv(&odir.join(format!("{name}_final.csv")), &first.lifted_final)?;
    log::info!("online {name}: error {:.3e}, relative time {:.3}", record.error.combined, record.relative_online_time);
    Ok(record)
}

/// Every record under the experiment's online directory, sorted by file name.
pub fn load_records(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let dir = online_dir(cfg);
    let entries = std::fs::read_dir(&dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

pub fn run_report(cfg: &ExperimentConfig) -> Result<ReportSummary> {
    let records = load_records(cfg)?;
    write_report(&records, &cfg.output_dir.join("report"))
}

pub fn run_pareto(cfg: &ExperimentConfig) -> Result<ParetoSet> {
    let records = load_records(cfg)?;
    if records.is_empty() {
        return Err(Error::invalid("no run records found"));
    }
    let set = pareto_extract(records);
    write_json(&cfg.output_dir.join("pareto.json"), &set)?;
    Ok(set)
}

/// Offline snapshots for a single reproductive run held in memory; handy for
/// callers that do not want the file-based phases.
pub fn fom_snapshots(problem: &ProblemConfig, mu: f64) -> Result<(FomProblem, SnapshotMatrix, SnapshotMatrix, f64)> {
    let fom = problem.build(mu)?;
    let dt = problem.dt();
    let n = problem.n_steps()?;
    let traj = match problem.default_solver() {
        SolverKind::BackwardEuler => fom_backward_euler(&fom, dt, n, crate::rom::DEFAULT_NEWTON_TOL)?,
        SolverKind::Rk4 => fom_rk4(&fom, dt, n)?,
    };
    let x = assemble_tagged(&traj.states, &traj.times, "", &problem.offset_mode(&fom))?;
    let f = assemble_tagged(&traj.forces, &traj.times, "", &OffsetMode::Zero)?;
    Ok((fom, x, f, traj.wall_time))
}
