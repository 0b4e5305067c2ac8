//! `qpath run <config>` / `qpath validate <config>`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numeric failure,
//! 130 interrupted (partial tables are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use clap::{Parser, Subcommand};
use qpath::experiments::config::parse_override;
use qpath::experiments::{emit_results, run_experiment, ExperimentConfig, RunControl};
use qpath::Error;
use time::macros::format_description;
use time::OffsetDateTime;

#[derive(Parser)]
#[command(
    name = "qpath",
    version,
    about = "Measured free-particle paths: dimension sweeps, feedback runs, oracle checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write `<mode>-<timestamp>.csv` / `.json`.
    Run {
        /// TOML config, or a result file (.csv / .json) whose metadata is reused.
        config: PathBuf,
        /// Set a config value by dotted path, e.g. `measurement.D=0.5`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Same as `--override ensemble.master_seed=N`.
        #[arg(long)]
        seed: Option<u64>,
        /// Same as `--override output.dir=DIR`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_numeric() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn load(
    path: &Path,
    raw: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> qpath::Result<ExperimentConfig> {
    let mut overrides = raw
        .iter()
        .map(|s| parse_override(s))
        .collect::<qpath::Result<Vec<_>>>()?;
    if let Some(s) = seed {
        overrides.push(("ensemble.master_seed".into(), s.to_string()));
    }
    if let Some(dir) = out {
        // quoted so the value is always read as a string
        let quoted = format!("{:?}", dir.to_string_lossy());
        overrides.push(("output.dir".into(), quoted));
    }
    let cfg = ExperimentConfig::load(path, &overrides).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
        other => other,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// `<mode>-<UTC timestamp>`, suffixed `-N` if files with that stem already exist.
fn unique_stem(dir: &Path, mode: &str) -> String {
    let fmt = format_description!("[year][month][day]T[hour][minute][second]Z");
    let stamp = OffsetDateTime::now_utc()
        .format(&fmt)
        .unwrap_or_else(|_| "unknown-time".into());
    let base = format!("{mode}-{stamp}");
    let taken = |stem: &str| {
        ["csv", "json"]
            .iter()
            .any(|ext| dir.join(format!("{stem}.{ext}")).exists())
    };
    if !taken(&base) {
        return base;
    }
    (1..)
        .map(|n| format!("{base}-{n}"))
        .find(|s| !taken(s))
        .expect("unbounded")
}

fn run(
    config: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
    workers: Option<usize>,
) -> ExitCode {
    let cfg = match load(config, overrides, seed, out) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let control = RunControl {
        workers,
        ..Default::default()
    };
    let flag = control.cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        eprintln!("warning: interrupt handler not installed: {e}");
    }
    let output = match run_experiment(&cfg, &control) {
        Ok(o) => o,
        Err(e) => return exit_for(&e),
    };
    let dir = PathBuf::from(&cfg.output.dir);
    let stem = unique_stem(&dir, cfg.mode.name());
    match emit_results(&output, &dir, &stem, &cfg.output.formats) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if output.is_partial() || control.cancel.load(Ordering::SeqCst) {
        eprintln!("interrupted: partial results written");
        return ExitCode::from(130);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            overrides,
            seed,
            out,
            workers,
        } => run(&config, &overrides, seed, out.as_deref(), workers),
        Command::Validate { config, overrides } => match load(&config, &overrides, None, None) {
            Ok(cfg) => {
                println!("ok: {} (seed {})", cfg.mode, cfg.ensemble.master_seed);
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
    }
}
