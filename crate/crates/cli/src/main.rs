use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod report;

use config::{parse_pair, parse_path, parse_point, parse_points, parse_reals, Command, Format, MetricCheck, RunConfig};

#[derive(Parser)]
#[command(name = "foliation-lab", version, about = "Experiments on singular holomorphic foliations of the projective plane")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FOLIATION_LAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Singular points of a form in one affine chart.
    Singularities(Flags),
    /// Eigenvalue ratio, normalization and class of each singular point.
    Classify(Flags),
    /// Model sector and bidisc window for an eigenvalue ratio.
    Sector(Flags),
    /// Trace a leaf from a start point.
    Trace(Flags),
    /// Poisson extension of sampled boundary data.
    Poisson(Flags),
    /// Plaque intersection sums against the wedge estimate.
    Wedge(Flags),
    /// Leafwise walks from two starts and the distance of their currents.
    Ergodic(Flags),
    /// Curvature, mass and Schwarz comparison checks of the leafwise metric.
    Metric(Flags),
    /// Ahlfors averages along a path of eigenvalue ratios.
    FamilySweep(Flags),
    /// Run the command named in a config file.
    Run(Flags),
}

/// Whole-list values; clap would otherwise split a `Vec` into repeated flags.
type Reals = Vec<f64>;
type Points = Vec<[f64; 4]>;

#[derive(Args, Default)]
struct Flags {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    form: Option<PathBuf>,
    #[arg(long)]
    chart: Option<usize>,
    #[arg(long)]
    jet_order: Option<u32>,
    /// `re,im`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    lambda: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    alpha: Option<[f64; 2]>,
    #[arg(long)]
    trace_model: bool,
    #[arg(long)]
    grid: Option<usize>,
    /// `z,w` or `re_z,im_z,re_w,im_w`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    start: Option<[f64; 4]>,
    #[arg(long)]
    arc: Option<f64>,
    /// CSV with columns `x,value`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    at: Option<[f64; 2]>,
    /// `zero` or `power:P`.
    #[arg(long)]
    tail: Option<String>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    a1: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    b1: Option<[f64; 2]>,
    /// Comma-separated levels.
    #[arg(long, value_parser = parse_reals)]
    eps: Option<Reals>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    n_max: Option<i64>,
    /// Points separated by `;`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_points)]
    starts: Option<Points>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    h_walk: Option<f64>,
    #[arg(long)]
    boxes_per_axis: Option<usize>,
    #[arg(long, value_enum)]
    check: Option<MetricCheck>,
    #[arg(long)]
    samples: Option<usize>,
    /// `re,im -> re,im`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_path)]
    lambda_path: Option<[[f64; 2]; 2]>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    slack: Option<f64>,
    /// Primary artifact (CSV or JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full report, in `--format`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Flags {
    fn to_config(&self, command: Option<Command>) -> RunConfig {
        RunConfig {
            command,
            preset: self.preset.clone(),
            form: self.form.clone(),
            chart: self.chart,
            jet_order: self.jet_order,
            lambda: self.lambda,
            alpha: self.alpha,
            trace_model: self.trace_model.then_some(true),
            grid: self.grid,
            start: self.start,
            arc: self.arc,
            data: self.data.clone(),
            gamma: self.gamma,
            at: self.at,
            tail: self.tail.clone(),
            a1: self.a1,
            b1: self.b1,
            eps: self.eps.clone(),
            delta: self.delta,
            pairs: self.pairs,
            n_max: self.n_max,
            starts: self.starts.clone(),
            n: self.n,
            horizon: self.horizon,
            h_walk: self.h_walk,
            boxes_per_axis: self.boxes_per_axis,
            check: self.check,
            samples: self.samples,
            lambda_path: self.lambda_path,
            steps: self.steps,
            radius: self.radius,
            seed: self.seed,
            tol: self.tol,
            slack: self.slack,
            out: self.out.clone(),
            report: self.report.clone(),
            format: self.format,
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(|e| format!("--jobs: {e}"))?;
    }
    let (command, flags) = match &cli.cmd {
        Sub::Singularities(f) => (Some(Command::Singularities), f),
        Sub::Classify(f) => (Some(Command::Classify), f),
        Sub::Sector(f) => (Some(Command::Sector), f),
        Sub::Trace(f) => (Some(Command::Trace), f),
        Sub::Poisson(f) => (Some(Command::Poisson), f),
        Sub::Wedge(f) => (Some(Command::Wedge), f),
        Sub::Ergodic(f) => (Some(Command::Ergodic), f),
        Sub::Metric(f) => (Some(Command::Metric), f),
        Sub::FamilySweep(f) => (Some(Command::FamilySweep), f),
        Sub::Run(f) => {
            if f.config.is_none() {
                return Err("run: --config is required".into());
            }
            (None, f)
        }
    };
    let base = match &flags.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    if let (Some(a), Some(b)) = (base.command, command) {
        if a != b {
            return Err(format!("config names command `{}` but `{}` was invoked", a.name(), b.name()));
        }
    }
    let cfg = base.merge(&flags.to_config(command)).resolve().map_err(|e| e.to_string())?;

    let t0 = Instant::now();
    let mut rep = commands::run_command(&cfg)?;
    rep.wall_clock = t0.elapsed().as_secs_f64();

    if let Some(out) = &cfg.out {
        rep.write_artifact(out).map_err(|e| format!("writing {}: {e}", out.display()))?;
    }
    if let Some(path) = &cfg.report {
        rep.write(path, cfg.format.unwrap_or_default()).map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    print!("{}", rep.text());
    Ok(rep.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
