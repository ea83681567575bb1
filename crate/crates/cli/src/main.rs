//! `mandiff` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 failed invariant check.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use mandiff::config::ExperimentConfig;
use mandiff::par::Execution;
use mandiff::Error;
use serde_json::json;

use commands::{Context, Outcome};

#[derive(Parser, Debug)]
#[command(name = "mandiff", version, about = "Score functions of diffusion models on manifold data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (sectioned key = value file); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output root; each subcommand writes into `<out>/<subcommand>/`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (1 = sequential).
    #[arg(long, global = true, env = "MANDIFF_WORKERS")]
    workers: Option<usize>,

    /// Point list for `oracle-eval` (CSV, or raw little-endian f64 with `.bin`).
    #[arg(long, global = true)]
    points: Option<PathBuf>,

    /// Diffusion time for `oracle-eval`.
    #[arg(long, global = true)]
    t: Option<f64>,

    /// Model checkpoint for `sample` (oracle score when omitted).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Oracle score and log-density at a list of points.
    OracleEval,
    /// Large/small-noise decomposition errors and cross-term bound on tube points.
    DecomposeCheck,
    /// Full invariant suite with a pass/fail table.
    Invariants,
    /// Train a score network by denoising score matching.
    Train,
    /// Backward-SDE samples from the oracle or a trained checkpoint.
    Sample,
    /// Sample-size sweep of W1 and score error.
    Rate,
    /// Summarise earlier runs under --out.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::OracleEval => "oracle-eval",
            Command::DecomposeCheck => "decompose-check",
            Command::Invariants => "invariants",
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Rate => "rate",
            Command::Report => "report",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn fail(command: &str, e: &Error) -> ExitCode {
    let code = exit_code(e);
    let class = if code == 3 { "PipelineFailure" } else { "ConfigInvalid" };
    let record = json!({
        "command": command,
        "error": class,
        "kind": e.kind(),
        "message": e.to_string(),
        "exit_code": code,
    });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn configure_workers(workers: Option<usize>) -> Execution {
    match workers {
        Some(0 | 1) => Execution::Sequential,
        #[cfg(feature = "parallel")]
        Some(n) => {
            // fails only if a pool already exists, in which case it is reused
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Execution::Sequential,
        None => Execution::auto(),
    }
}

fn run(cli: &Cli) -> Result<(Outcome, PathBuf, usize, ExperimentConfig), Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    let cfg = cfg.resolved()?;
    let exec = configure_workers(cfg.workers);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    let dir = io::run_dir(&out, cli.command.name())?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let ctx = Context { cfg, exec, dir: dir.clone(), out, points: cli.points.clone(), t: cli.t, model: cli.model.clone() };
    let outcome = match cli.command {
        Command::OracleEval => commands::oracle_eval(&ctx)?,
        Command::DecomposeCheck => commands::decompose_check(&ctx)?,
        Command::Invariants => commands::invariants(&ctx)?,
        Command::Train => commands::train_cmd(&ctx)?,
        Command::Sample => commands::sample_cmd(&ctx)?,
        Command::Rate => commands::rate_cmd(&ctx)?,
        Command::Report => commands::report(&ctx)?,
    };
    let workers = if exec.is_parallel() { mandiff::par::workers() } else { 1 };
    Ok((outcome, dir, workers, ctx.cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                let kind = if matches!(e.kind(), clap::error::ErrorKind::InvalidSubcommand) {
                    "SubcommandUnknown"
                } else {
                    "ConfigInvalid"
                };
                eprintln!("{}", json!({ "error": kind, "message": e.kind().to_string(), "exit_code": 2 }));
                return ExitCode::from(2);
            }
            return ExitCode::SUCCESS;
        }
    };
    let start = Instant::now();
    let name = cli.command.name();
    match run(&cli) {
        Ok((outcome, dir, workers, cfg)) => {
            let mut outputs = vec!["config.toml".to_string()];
            outputs.extend(outcome.outputs);
            let manifest = io::Manifest {
                command: name.into(),
                version: env!("CARGO_PKG_VERSION"),
                seed: cfg.seed,
                workers,
                parallel: workers > 1,
                config: "config.toml".into(),
                outputs,
                wall_seconds: start.elapsed().as_secs_f64(),
                details: outcome.details,
            };
            if let Err(e) = io::write_json(&dir.join("manifest.json"), &manifest) {
                return fail(name, &e);
            }
            if outcome.failed_checks {
                eprintln!("{}", json!({ "command": name, "error": "AcceptanceFailure", "exit_code": 4 }));
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(name, &e),
    }
}
