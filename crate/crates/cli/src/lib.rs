//! Command-line experiments: `plan`, `simulate`, `control`, `braid` and
//! `report`. Every run draws its randomness from one generator seeded by
//! `--seed`, buffers its artifacts, and on success writes them with a
//! manifest of SHA-256 hashes into `--out-dir`.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use artifacts::{Manifest, Outputs};
use config::{ControlMode, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "shearlab",
    version,
    about = "Shear-flow controllability experiments"
)]
pub struct Cli {
    /// Seed of the run's random generator (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving artifacts and the manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find a move sequence between two step profiles.
    Plan(PlanArgs),
    /// Run the channel solver from a profile, optionally forced.
    Simulate(SimulateArgs),
    /// Build a forcing schedule and check the transfer it drives.
    Control(ControlArgs),
    /// Braid word of a trajectory ensemble, or of a least-action one.
    Braid(BraidArgs),
    /// Tabulate cost and endpoint error over finished control runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    /// Record every intermediate profile.
    #[arg(long)]
    snapshots: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    mollify_width: Option<f64>,
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long)]
    every: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[arg(long, value_enum)]
    mode: Option<ControlMode>,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    mollify_width: Option<f64>,
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BraidArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Transfer reports or the run directories holding them.
    #[arg(long, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn params_json<T: serde::Serialize>(p: &T) -> serde_json::Value {
    serde_json::to_value(p).expect("serializable params")
}

/// Execute one invocation and return its committed manifest.
pub fn run(cli: Cli) -> Result<Manifest, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outputs::default();
    let (name, params) = match cli.command {
        Command::Plan(a) => {
            let p = &mut cfg.plan;
            set_opt(&mut p.source, a.source);
            set_opt(&mut p.target, a.target);
            set(&mut p.eps, a.eps);
            set_opt(&mut p.budget, a.budget);
            p.snapshots |= a.snapshots;
            set(&mut p.out, a.out);
            commands::plan::run(p, &mut rng, &mut out)?;
            ("plan", params_json(p))
        }
        Command::Simulate(a) => {
            let p = &mut cfg.simulate;
            set_opt(&mut p.profile, a.profile);
            set(&mut p.n1, a.n1);
            set(&mut p.n2, a.n2);
            set(&mut p.l, a.l);
            set_opt(&mut p.horizon, a.horizon);
            set_opt(&mut p.dt, a.dt);
            set(&mut p.mollify_width, a.mollify_width);
            set(&mut p.perturbation, a.perturbation);
            set_opt(&mut p.schedule, a.schedule);
            set(&mut p.every, a.every);
            set(&mut p.out, a.out);
            set(&mut p.snapshot, a.snapshot);
            commands::simulate::run(p, &mut rng, &mut out)?;
            ("simulate", params_json(p))
        }
        Command::Control(a) => {
            let p = &mut cfg.control;
            set(&mut p.mode, a.mode);
            set_opt(&mut p.profile, a.profile);
            set_opt(&mut p.target, a.target);
            set(&mut p.k, a.k);
            set(&mut p.horizon, a.horizon);
            set(&mut p.amplitude, a.amplitude);
            set(&mut p.n1, a.n1);
            set(&mut p.n2, a.n2);
            set(&mut p.l, a.l);
            set(&mut p.mollify_width, a.mollify_width);
            set(&mut p.gain, a.gain);
            set(&mut p.stride, a.stride);
            set(&mut p.out, a.out);
            set(&mut p.report, a.report);
            commands::control::run(p, &mut rng, &mut out)?;
            ("control", params_json(p))
        }
        Command::Braid(a) => {
            let p = &mut cfg.braid;
            set_opt(&mut p.input, a.input);
            set_opt(&mut p.reference, a.reference);
            set(&mut p.l, a.l);
            set(&mut p.out, a.out);
            commands::braid::run(p, &mut rng, &mut out)?;
            ("braid", params_json(p))
        }
        Command::Report(a) => {
            let p = &mut cfg.report;
            if !a.runs.is_empty() {
                p.runs = a.runs;
            }
            set(&mut p.out, a.out);
            commands::report::run(p, &mut out)?;
            ("report", params_json(p))
        }
    };
    let manifest = out.manifest(name, seed, params);
    out.commit(&cli.out_dir, &manifest)?;
    Ok(manifest)
}

/// Parse `args`, run, report errors on stderr, and return the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let dir = cli.out_dir.clone();
    match run(cli) {
        Ok(m) => {
            println!(
                "{}: {} artifact(s) in {}",
                m.command,
                m.artifacts.len(),
                dir.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
