//! Experiment CLI: oracle verification, single-config runs, and grid sweeps.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 numerical divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use trcl_core::error::Error;
use trcl_core::harness::{
    export_results, load_config, make_task_stream, run_verify, summarize_method, write_summary,
    ExportFormat, Method, MetricsLog, RunConfig, Summary, TaskStreamSpec, VerifySuite,
};

#[derive(Parser)]
#[command(
    name = "trcl",
    version,
    about = "Trust-region continual learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the numeric oracle suites and report one line per check.
    Verify {
        /// all, fisher-identity, rank-one-square, grad-check,
        /// taylor-locality, or quad-equivalence
        #[arg(long, default_value = "all")]
        suite: VerifySuite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one method over a task stream for every configured seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for CSV traces and summary.json
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Cartesian sweep over methods and optimizer constants.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Verify { suite, seed } => cmd_verify(suite, seed),
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Sweep { config, grid, out } => cmd_sweep(&config, &grid, &out),
    }
    .unwrap_or_else(|e| {
        eprintln!("error: {e}");
        match e {
            Error::NumericalDivergence { .. } => ExitCode::from(EXIT_DIVERGED),
            _ => ExitCode::from(EXIT_CONFIG_ERROR),
        }
    })
}

fn cmd_verify(suite: VerifySuite, seed: u64) -> Result<ExitCode, Error> {
    let report = run_verify(suite, seed)?;
    for check in &report.checks {
        println!(
            "{} {} — {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    if report.passed() {
        println!("verify: all {} checks passed", report.checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        println!("verify: {failed} of {} checks failed", report.checks.len());
        Ok(ExitCode::from(EXIT_VERIFY_FAILED))
    }
}

fn run_one(
    stream_spec: &TaskStreamSpec,
    cfg: &RunConfig,
    label: &str,
    out: &Path,
) -> Result<Vec<MetricsLog>, Error> {
    let tasks = make_task_stream(stream_spec)?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let mut logs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let log = trcl_core::harness::run_continual(&tasks, stream_spec, cfg, seed)?;
        let path = out.join(format!("{label}_seed{seed}.csv"));
        export_results(&log, &path, ExportFormat::Csv)?;
        if let Some(step) = log.diverged {
            log::warn!("{label} seed {seed} diverged at step {step}");
        }
        logs.push(log);
    }
    Ok(logs)
}

fn cmd_run(config: &Path, out: &Path) -> Result<ExitCode, Error> {
    let (stream_spec, cfg) = load_config(config)?;
    let label = cfg.method.label().to_string();
    let logs = run_one(&stream_spec, &cfg, &label, out)?;
    let mut summary = Summary::default();
    let diverged = logs.iter().any(|l| l.diverged.is_some());
    match summarize_method(&mut summary, &label, &logs) {
        Ok(()) => {}
        Err(Error::NumericalDivergence { .. }) => {}
        Err(e) => return Err(e),
    }
    write_summary(&summary, &out.join("summary.json"))?;
    println!(
        "wrote {} run(s) and summary.json to {}",
        logs.len(),
        out.display()
    );
    if diverged {
        eprintln!("error: at least one run diverged; see run metadata");
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

/// Grid axes for `sweep`; absent axes fall back to the base config's value.
#[derive(Debug, Deserialize)]
struct GridFile {
    #[serde(default)]
    methods: Option<Vec<Method>>,
    #[serde(default)]
    lambda: Option<Vec<f64>>,
    #[serde(default)]
    beta: Option<Vec<f64>>,
    #[serde(default)]
    eta: Option<Vec<f64>>,
}

fn cmd_sweep(config: &Path, grid: &Path, out: &Path) -> Result<ExitCode, Error> {
    let (stream_spec, base) = load_config(config)?;
    let text = std::fs::read_to_string(grid).map_err(|source| Error::Io {
        path: grid.display().to_string(),
        source,
    })?;
    let grid: GridFile =
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("grid file: {e}")))?;

    let methods = grid.methods.unwrap_or_else(|| vec![base.method]);
    let lambdas = grid.lambda.unwrap_or_else(|| vec![base.continual.lambda]);
    let betas = grid.beta.unwrap_or_else(|| vec![base.continual.beta]);
    let etas = grid.eta.unwrap_or_else(|| vec![base.continual.eta]);

    let mut summary = Summary::default();
    let mut any_diverged = false;
    for &method in &methods {
        for &lambda in &lambdas {
            for &beta in &betas {
                for &eta in &etas {
                    let mut cfg = base.clone();
                    cfg.method = method;
                    cfg.continual.lambda = lambda;
                    cfg.continual.beta = beta;
                    cfg.continual.eta = eta;
                    cfg.meta = if method == Method::Ftml {
                        cfg.meta.or_else(|| Some(Default::default()))
                    } else {
                        None
                    };
                    cfg.validate(&stream_spec)?;
                    let label = format!("{}_lambda{lambda}_beta{beta}_eta{eta}", method.label());
                    let logs = run_one(&stream_spec, &cfg, &label, out)?;
                    any_diverged |= logs.iter().any(|l| l.diverged.is_some());
                    match summarize_method(&mut summary, &label, &logs) {
                        Ok(()) | Err(Error::NumericalDivergence { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    write_summary(&summary, &out.join("summary.json"))?;
    println!(
        "wrote sweep summary for {} configuration(s) to {}",
        summary.methods.len(),
        out.display()
    );
    if any_diverged {
        eprintln!("error: at least one sweep run diverged");
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    Ok(ExitCode::SUCCESS)
}
