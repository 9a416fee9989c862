//! `ell-lab`: runs one experiment from a TOML configuration and writes a
//! JSON or CSV report.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};
use ell_lab_core::LabError;
use serde_json::json;

use crate::commands::{Context, Outcome};
use crate::config::{ExperimentConfig, Format};

#[derive(Debug, Parser)]
#[command(name = "ell-lab", version, about = "Variational experiments for indefinite semilinear elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the report; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit wall-clock timings so repeated runs are byte-identical.
    #[arg(long, global = true)]
    stable_output: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Principal eigenpair, optionally masked to {h ≤ 0} or swept over R_max.
    Eigen,
    /// Constrained eigenvalue λ1(Ω,V,h).
    Lambda1h,
    /// Local minimizer at the configured λ.
    Minimize,
    /// Mountain-pass critical point at the configured λ.
    MountainPass,
    /// Continuation of the minimizer branch.
    Branch,
    /// Growth of the branch near λ1(Ω^{−0},V).
    BlowupFit,
    /// λ1(Ω,V,h_μ) for h_μ = μh⁺ − h⁻.
    SweepMu,
    /// Bracket for the existence threshold λ*.
    LambdaStar,
    /// Nonexistence certificate at the configured λ.
    Certify,
    /// Verdicts on the compact-embedding conditions.
    CheckEmbedding,
    /// Manufactured-solution and finite-difference self-checks.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Lambda1h => "lambda1h",
            Command::Minimize => "minimize",
            Command::MountainPass => "mountain-pass",
            Command::Branch => "branch",
            Command::BlowupFit => "blowup-fit",
            Command::SweepMu => "sweep-mu",
            Command::LambdaStar => "lambda-star",
            Command::Certify => "certify",
            Command::CheckEmbedding => "check-embedding",
            Command::Verify => "verify",
        }
    }

    fn run(self, cx: &Context) -> Result<Outcome> {
        match self {
            Command::Eigen => commands::eigen(cx),
            Command::Lambda1h => commands::lambda1h(cx),
            Command::Minimize => commands::minimize(cx),
            Command::MountainPass => commands::mountain_pass_cmd(cx),
            Command::Branch => commands::branch(cx),
            Command::BlowupFit => commands::blowup(cx),
            Command::SweepMu => commands::sweep(cx),
            Command::LambdaStar => commands::lambda_star(cx),
            Command::Certify => commands::certify(cx),
            Command::CheckEmbedding => commands::embedding(cx),
            Command::Verify => commands::verify(cx),
        }
    }
}

const EXIT_INVALID: u8 = 1;
const EXIT_REFUSED: u8 = 2;
const EXIT_FAILURE: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<LabError>() {
        Some(LabError::Refused(_)) => EXIT_REFUSED,
        Some(LabError::SolverFailure { .. }) => EXIT_FAILURE,
        _ => EXIT_INVALID,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ELL_LAB_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("ELL_LAB_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

/// Runs the subcommand and writes the report; returns the exit code.
fn execute(cli: &Cli) -> Result<u8> {
    configure_threads()?;
    let path = cli.config.as_ref().context("--config <path> is required")?;
    let config = ExperimentConfig::load(path)?;
    let seed = cli.seed.or(config.run.seed).unwrap_or(0);
    let format = cli.format.or(config.run.format).unwrap_or(Format::Json);
    let out = cli.out.clone().or(config.run.out.clone());

    let start = Instant::now();
    let problem = config.problem_spec().discretize()?;
    let window = commands::window_of(&problem)?;
    let cx = Context {
        config: &config,
        problem: &problem,
        window,
        seed,
    };
    let outcome = cli.command.run(&cx)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut report = json!({
        "tool": "ell-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cli.command.name(),
        "seed": seed,
        "config": serde_json::to_value(&config)?,
        "window": report::window(&window),
        "tolerances": serde_json::to_value(&config.solver)?,
        "warnings": problem.warnings(),
        "status": if outcome.failure.is_some() { "solver_failure" } else { "ok" },
        "failure": outcome.failure,
        "result": outcome.result,
    });
    if !cli.stable_output {
        report["timings"] = json!({ "wall_seconds": elapsed });
    }
    let (text, ext) = match format {
        Format::Json => (serde_json::to_string_pretty(&report)? + "\n", "json"),
        Format::Csv => match &outcome.table {
            Some(t) => (t.to_csv(), "csv"),
            None => (report::flatten_csv(&report), "csv"),
        },
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let file = dir.join(format!("{}.{ext}", cli.command.name()));
            std::fs::write(&file, text).with_context(|| format!("writing {}", file.display()))?;
            let echo = dir.join(format!("{}.config.toml", cli.command.name()));
            std::fs::write(&echo, config.to_toml()).with_context(|| format!("writing {}", echo.display()))?;
        }
        None => print!("{text}"),
    }
    if let Some(reason) = report["failure"].as_str() {
        eprintln!("ell-lab: {reason}");
        return Ok(EXIT_FAILURE);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("ell-lab: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
