//! Command-line front end. Each subcommand reads one TOML config; flags
//! override only the seed and the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{RunConfig, RunKind};
use crate::error::{Error, Result};
use crate::estimators::{estimate_cl_discretized, estimate_cl_truncated, sample_std, ABStatistics, ClConfig, EstimatorResult};
use crate::harness::{holder_scan, run_sweep};
use crate::oracle::exact_thermal_average;
use crate::spectral::{covariance, CovarianceMethod};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SAMPLER: i32 = 3;
pub const EXIT_BOUND: i32 = 4;

/// Environment variable that overrides the configured thread count.
pub const THREADS_ENV: &str = "PATHLOOP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pathloop", version, about = "Quantum thermal averages through path-integral representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid-oracle thermal average (d = 1).
    Exact(RunArgs),
    /// One Monte Carlo estimate (std, cl or cl-disc).
    Estimate(RunArgs),
    /// Convergence sweep with bound verdicts.
    Sweep(RunArgs),
    /// Loop covariance by spectral sum, closed form and Mehler kernel.
    Covariance(RunArgs),
    /// Increment statistics of the loop measure.
    Holder(RunArgs),
    /// Dispatch on the config's `representation`.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file.
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::SamplerDiverged { .. } | Error::WeightUnderflow => EXIT_SAMPLER,
        _ => EXIT_OTHER,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.output {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn init_threads(cfg: &RunConfig) {
    let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).or(cfg.threads);
    if let Some(n) = n.filter(|&n| n > 0) {
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one command and returns its exit code.
pub fn execute(cmd: &Command) -> Result<i32> {
    let (args, kind) = match cmd {
        Command::Exact(a) => (a, Some(RunKind::Exact)),
        Command::Estimate(a) => (a, None),
        Command::Sweep(a) => (a, Some(RunKind::Sweep)),
        Command::Covariance(a) => (a, Some(RunKind::Covariance)),
        Command::Holder(a) => (a, Some(RunKind::Holder)),
        Command::Run(a) => (a, None),
    };
    let cfg = load(args)?;
    init_threads(&cfg);
    fs::create_dir_all(&cfg.output.dir)?;
    let kind = match (cmd, kind) {
        (Command::Estimate(_), _) => match cfg.representation {
            RunKind::Std | RunKind::Cl | RunKind::ClDisc => cfg.representation,
            other => {
                return Err(Error::Config(format!(
                    "estimate needs representation std, cl or cl-disc, got {other:?}"
                )))
            }
        },
        (_, Some(k)) => k,
        (_, None) => cfg.representation,
    };
    match kind {
        RunKind::Exact => cmd_exact(&cfg),
        RunKind::Std | RunKind::Cl | RunKind::ClDisc => cmd_estimate(&cfg, kind),
        RunKind::Sweep => cmd_sweep(&cfg),
        RunKind::Covariance => cmd_covariance(&cfg),
        RunKind::Holder => cmd_holder(&cfg),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn cmd_exact(cfg: &RunConfig) -> Result<i32> {
    let p = cfg.potential_spec()?;
    let o = cfg.observable_spec()?;
    let r = exact_thermal_average(&p, &o, cfg.beta, &cfg.oracle_settings())?;
    let hash = cfg.hash();
    write_json(&cfg.output.dir.join("exact.json"), &Stamped { config_hash: &hash, body: &r })?;
    println!("{}", r.value);
    Ok(EXIT_OK)
}

/// Column order of the estimate CSV.
pub const ESTIMATE_HEADER: [&str; 25] = [
    "config_hash",
    "representation",
    "potential",
    "observable",
    "beta",
    "a",
    "m1",
    "m2",
    "n_modes",
    "beads",
    "n_quad",
    "n_samples",
    "seed",
    "estimate",
    "std_error",
    "ess",
    "ess_warning",
    "acceptance",
    "mean_a",
    "mean_b",
    "mean_ab",
    "max_log_a",
    "max_abs_b",
    "a_violations",
    "b_violations",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_estimate(cfg: &RunConfig, kind: RunKind) -> Result<i32> {
    let p = cfg.potential_spec()?;
    let o = cfg.observable_spec()?;
    let cl_cfg = ClConfig {
        n_samples: cfg.sampling.n_samples,
        seed: cfg.seed,
        ess_floor: cfg.sampling.ess_floor,
        strict: cfg.sampling.strict,
    };
    let first = |v: &[usize], what: &str| {
        v.first().copied().ok_or_else(|| Error::Config(format!("grid.{what} needs a value")))
    };
    let (r, stats): (EstimatorResult, Option<ABStatistics>) = match kind {
        RunKind::Std => (sample_std(&p, &o, cfg.beta, first(&cfg.grid.d, "d")?, &cfg.std_sampler())?, None),
        RunKind::Cl => {
            let (r, s) = estimate_cl_truncated(&p, &o, cfg.beta, first(&cfg.grid.n, "n")?, cfg.sampling.n_quad, &cl_cfg)?;
            (r, Some(s))
        }
        _ => {
            let (r, s) =
                estimate_cl_discretized(&p, &o, cfg.beta, first(&cfg.grid.n, "n")?, first(&cfg.grid.d, "d")?, &cl_cfg)?;
            (r, Some(s))
        }
    };
    let n_quad = match kind {
        RunKind::Cl => Some(cfg.sampling.n_quad.unwrap_or_else(|| crate::estimators::default_n_quad(cfg.grid.n[0]))),
        _ => None,
    };
    let path = cfg.output.dir.join("estimate.csv");
    let mut wr = csv::Writer::from_path(&path).map_err(csv_io)?;
    wr.write_record(ESTIMATE_HEADER).map_err(csv_io)?;
    wr.write_record([
        cfg.hash(),
        r.representation.to_string(),
        p.id(),
        o.id(),
        cfg.beta.to_string(),
        p.a.to_string(),
        p.m1.to_string(),
        o.m2.to_string(),
        opt(r.representation.modes()),
        opt(r.representation.beads()),
        opt(n_quad),
        r.n_samples.to_string(),
        r.seed.to_string(),
        r.estimate.to_string(),
        r.std_error.to_string(),
        r.ess.to_string(),
        r.ess_warning.to_string(),
        opt(r.acceptance),
        opt(stats.map(|s| s.mean_a)),
        opt(stats.map(|s| s.mean_b)),
        opt(stats.map(|s| s.mean_ab)),
        opt(stats.map(|s| s.max_log_a)),
        opt(stats.map(|s| s.max_abs_b)),
        opt(stats.map(|s| s.a_bound_violations)),
        opt(stats.map(|s| s.b_bound_violations)),
    ])
    .map_err(csv_io)?;
    wr.flush()?;
    if r.ess_warning {
        eprintln!("warning: effective sample size {:.1} below floor {}", r.ess, cfg.sampling.ess_floor);
    }
    println!("{} ± {}", r.estimate, r.std_error);
    Ok(EXIT_OK)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    let plan = cfg.sweep_plan()?;
    let report = run_sweep(&plan)?;
    let hash = cfg.hash();
    let f = fs::File::create(cfg.output.dir.join("sweep.csv"))?;
    report.write_csv(&hash, f)?;
    write_json(&cfg.output.dir.join("sweep.json"), &Stamped { config_hash: &hash, body: &report })?;
    for pt in &report.points {
        if let Some(msg) = &pt.failure {
            eprintln!("point N={:?} D={:?} failed: {msg}", pt.n_modes, pt.beads);
        }
    }
    if report.all_pass {
        println!("all {} points pass", report.points.len());
        Ok(EXIT_OK)
    } else {
        let failed = report.points.iter().filter(|p| !p.passed()).count();
        eprintln!("{failed} of {} points failed", report.points.len());
        let bound_failed = report.monotone == Some(false)
            || report.points.iter().any(|p| {
                p.failure.is_none()
                    && ([p.verdict, p.weight_verdict, p.observable_verdict].iter().flatten().any(|v| !v.pass)
                        || p.partition_lower_ok == Some(false))
            });
        Ok(if bound_failed { EXIT_BOUND } else { EXIT_SAMPLER })
    }
}

pub fn cmd_covariance(cfg: &RunConfig) -> Result<i32> {
    let sec = cfg.covariance.as_ref().ok_or_else(|| Error::Config("missing [covariance] section".into()))?;
    let a = cfg.potential.a;
    let path = cfg.output.dir.join("covariance.csv");
    let mut wr = csv::Writer::from_path(&path).map_err(csv_io)?;
    wr.write_record(["config_hash", "tau", "spectral", "spectral_tail_bound", "closed", "mehler"]).map_err(csv_io)?;
    let hash = cfg.hash();
    for &tau in &sec.taus {
        let s = covariance(cfg.beta, a, tau, CovarianceMethod::Spectral { k_max: sec.k_max })?;
        let c = covariance(cfg.beta, a, tau, CovarianceMethod::Closed)?;
        let m = covariance(cfg.beta, a, tau, CovarianceMethod::Mehler).ok();
        wr.write_record([
            hash.clone(),
            tau.to_string(),
            s.value.to_string(),
            s.tail_bound.to_string(),
            c.value.to_string(),
            opt(m.map(|m| m.value)),
        ])
        .map_err(csv_io)?;
    }
    wr.flush()?;
    Ok(EXIT_OK)
}

pub fn cmd_holder(cfg: &RunConfig) -> Result<i32> {
    let sec = cfg.holder.as_ref().ok_or_else(|| Error::Config("missing [holder] section".into()))?;
    let t = holder_scan(
        cfg.beta,
        cfg.potential.a,
        cfg.potential.dim,
        sec.n_modes,
        cfg.sampling.n_samples,
        &sec.deltas,
        cfg.seed,
    )?;
    let f = fs::File::create(cfg.output.dir.join("holder.csv"))?;
    t.write_csv(&cfg.hash(), f)?;
    let mut out = std::io::stdout().lock();
    if let Some(s) = t.small_delta_slope {
        let _ = writeln!(out, "small-δ slope {s}");
    }
    Ok(if t.rows.iter().all(|r| r.within_bound) { EXIT_OK } else { EXIT_BOUND })
}
