use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperred::harness::{self, ExperimentConfig, Method, RunMode, SolverKind};
use hyperred::Error;

#[derive(Parser)]
#[command(name = "hyperred", version, about = "Projection-based ROM pipeline with hyper-reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the FOM for every training parameter and the test parameter.
    Offline(Common),
    /// Merge training snapshots and compute state and force bases.
    Merge {
        #[command(flatten)]
        common: Common,
        /// Energy targets to report, comma separated (defaults to --er).
        #[arg(long, value_delimiter = ',')]
        targets: Vec<f64>,
    },
    /// Build the hyper-reduced model, integrate and record the run.
    Online(Common),
    /// Write the tidy CSV and Pareto front files for all recorded runs.
    Report(Common),
    /// Print the Pareto front of all recorded runs.
    Pareto(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    er: Option<f64>,
    /// Number of sampled indices n_f.
    #[arg(long)]
    nsr: Option<usize>,
    #[arg(long)]
    eqp_tol: Option<f64>,
    #[arg(long)]
    maxnnls: Option<usize>,
    #[arg(long)]
    nwin: Option<usize>,
    /// Test parameter.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> hyperred::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(er) = self.er {
            cfg.er = er;
        }
        if self.nsr.is_some() {
            cfg.nsr = self.nsr;
        }
        if let Some(t) = self.eqp_tol {
            cfg.eqp_tol = t;
        }
        if self.maxnnls.is_some() {
            cfg.maxnnls = self.maxnnls;
        }
        if let Some(n) = self.nwin {
            cfg.nwin = n;
        }
        if let Some(mu) = self.mu {
            cfg.problem.mu = mu;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if self.solver.is_some() {
            cfg.solver = self.solver;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NewtonDiverged { .. } | Error::IntegrationBlowup { .. } | Error::Singular(_) | Error::NonFinite(_) | Error::NoEnergy => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> hyperred::Result<()> {
    match cli.command {
        Command::Offline(c) => {
            let cfg = c.load()?;
            for m in harness::run_offline(&cfg)? {
                println!("mu = {}: {} snapshots, {:.3} s", m.mu, m.times.len(), m.wall_time);
            }
        }
        Command::Merge { common, targets } => {
            let cfg = common.load()?;
            let m = harness::run_merge(&cfg, &targets)?;
            for (i, w) in m.windows.iter().enumerate() {
                for (t, (s, f)) in m.targets.iter().zip(w.state_energy.iter().zip(&w.force_energy)) {
                    println!("window {i}: E_r = {t}: r_y = {}, r_f = {}", s.r, f.r);
                }
            }
        }
        Command::Online(c) => {
            let cfg = c.load()?;
            let r = harness::run_online(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Report(c) => {
            let cfg = c.load()?;
            let s = harness::run_report(&cfg)?;
            for m in &s.omitted {
                eprintln!("no records for method {m}; front file omitted");
            }
            println!("{} rows; wrote {}", s.rows, s.front_files.join(", "));
        }
        Command::Pareto(c) => {
            let cfg = c.load()?;
            let set = harness::run_pareto(&cfg)?;
            println!("method,relative_online_time,combined_error,n_points,er");
            for r in set.front_records() {
                println!("{},{},{},{},{}", r.method, r.relative_online_time, r.error.combined, r.n_points, r.er);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
