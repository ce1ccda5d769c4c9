//! Batch driver: `run`, `check` and `sweep` over TOML scenario files.
//!
//! Exit codes: 0 success, 1 configuration (or other) error, 2 violated
//! hypothesis.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rigidkit::experiments::{
    self, emit_reports, exit_code, output_dir, parse_param, Config, Override, Reports, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "rigidkit", version, about = "Immersion energy and rigidity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze the family member at `family.k` and write run.json.
    Run {
        config: PathBuf,
        /// Override a configuration key, e.g. `--set family.k=4`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Validate the configuration and print it fully resolved.
    Check {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the convergence experiment and write sweep.csv and sweep.json.
    Sweep {
        config: PathBuf,
        /// Inclusive index range, e.g. `k=1..32`; defaults to the `[sweep]` section.
        #[arg(long, value_name = "k=A..B")]
        param: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn load(path: &Path, set: &[String], param: Option<&str>) -> rigidkit::Result<Config> {
    let mut overrides = set.iter().map(|s| Override::parse(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(param) = param {
        overrides.extend(parse_param(param)?);
    }
    Config::load(path, &overrides)
}

fn execute(command: Command) -> rigidkit::Result<()> {
    let env_dir = std::env::var(OUT_DIR_ENV).ok();
    match command {
        Command::Check { config, set } => {
            let config = load(&config, &set, None)?;
            experiments::check(&config)?;
            print!("{}", config.to_toml());
        }
        Command::Run { config, set } => {
            let config = load(&config, &set, None)?;
            let report = experiments::run(&config)?;
            let dir = output_dir(&config, env_dir.as_deref());
            for path in emit_reports(&Reports::Run(report), &dir)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep { config, param, set } => {
            let config = load(&config, &set, param.as_deref())?;
            let report = experiments::sweep(&config)?;
            for warning in &report.trace.warnings {
                eprintln!("warning: {warning}");
            }
            let dir = output_dir(&config, env_dir.as_deref());
            for path in emit_reports(&Reports::Sweep(report), &dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = execute(cli.command);
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
