use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inr_forge::task::{parse_override, resolve_config, run_task, summarize, sweep, sweep_table, TaskConfig};
use inr_forge::trilogy::verify_theory;
use inr_forge::Error;
use serde_json::Value;

const EXIT_THEORY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "inr-forge", version, about = "Train coordinate networks on reconstruction tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an image directly.
    Fit(RunArgs),
    /// Fit a photon-noise-corrupted image.
    Denoise(RunArgs),
    /// Fit a box-downsampled image and evaluate at full resolution.
    Sr(RunArgs),
    /// Reconstruct from a parallel-beam sinogram.
    Ct(RunArgs),
    /// Fit a volumetric occupancy field.
    Occupancy(RunArgs),
    /// Fit a 1-D waveform.
    Audio(RunArgs),
    /// One run per value of a numeric config field.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dot path or unique leaf name of the swept field, e.g. `s0` or `ct.projections`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Check the series identities behind the activation; exits 1 on any violation.
    VerifyTheory {
        #[arg(long, default_value_t = 30)]
        order_cap: usize,
        #[arg(long, default_value_t = 40)]
        inner_cap: usize,
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
    /// Tabulate every metrics.jsonl found under a directory.
    Summarize {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; keys not given fall back to the task defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dot-path override, e.g. `--set network.s0=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn load_config(args: &RunArgs, task: Option<&str>) -> Result<TaskConfig, Error> {
    let user = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    if let (Some(task), Some(named)) = (task, user.get("task").and_then(Value::as_str)) {
        if named != task {
            return Err(Error::Config(format!("config is for task {named:?}, command is {task:?}")));
        }
    }
    let mut overrides = Vec::new();
    if let Some(task) = task {
        overrides.push(("task".to_string(), task.to_string()));
    }
    for raw in &args.overrides {
        overrides.push(parse_override(raw)?);
    }
    if let Some(seed) = args.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    resolve_config(user, &overrides)
}

fn run_one(args: &RunArgs, task: &str) -> Result<(), Error> {
    let cfg = load_config(args, Some(task))?;
    let report = run_task(&cfg, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_sweep(args: &RunArgs, axis: &str, values: &[f64]) -> Result<(), Error> {
    let cfg = load_config(args, None)?;
    let reports = sweep(&cfg, axis, values, &args.out)?;
    print!("{}", sweep_table(&reports, axis));
    Ok(())
}

fn run_summary(dir: &Path) -> Result<(), Error> {
    print!("{}", summarize(dir)?);
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("INR_FORGE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("INR_FORGE_THREADS={raw:?} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() -> Result<(), Error> {
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    inr_forge::alloc::retain_freed_memory();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let result = match &cli.command {
        Command::Fit(a) => run_one(a, "fit"),
        Command::Denoise(a) => run_one(a, "denoise"),
        Command::Sr(a) => run_one(a, "sr"),
        Command::Ct(a) => run_one(a, "ct"),
        Command::Occupancy(a) => run_one(a, "occupancy"),
        Command::Audio(a) => run_one(a, "audio"),
        Command::Sweep { run, axis, values } => run_sweep(run, axis, values),
        Command::VerifyTheory {
            order_cap,
            inner_cap,
            grid,
        } => {
            return match verify_theory(*order_cap, *inner_cap, *grid) {
                Ok(report) => {
                    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_THEORY)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            };
        }
        Command::Summarize { out } => run_summary(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
