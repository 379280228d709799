//! `qmet`: bounds, Fisher information, table reproduction, Monte Carlo and
//! invariant validation for Hermite-Gaussian pointer metrology.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 failed
//! invariant, 3 numeric error.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qmet_core::config::{parse_modes, ExperimentConfig};

use commands::{CommandResult, Failure};

const EXIT_USAGE: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "qmet", version, about = "Two-parameter quantum metrology with Hermite-Gaussian pointers")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true, env = "QMET_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Write the result here instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Master seed of the Monte Carlo generator.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trade-off curves, Holevo lines, endpoints, QCR lines and the QL point.
    Bounds {
        /// Comma-separated Hermite-Gaussian orders (default: config `modes`).
        #[arg(long, value_name = "LIST")]
        n: Option<String>,
        /// Use this incompatibility criterion instead of the per-mode values.
        #[arg(long, value_name = "S")]
        s: Option<f64>,
    },
    /// Numeric versus analytic classical Fisher information.
    Cfim {
        #[arg(long, value_name = "LIST")]
        n: Option<String>,
        /// nonorthogonal, direct_imaging or all.
        #[arg(long, default_value = "all")]
        method: String,
    },
    /// Reproduction of the measured minimum-detectable table.
    Table1 {
        /// Skip the Monte Carlo columns.
        #[arg(long)]
        no_mc: bool,
    },
    /// Poisson Monte Carlo of the shot-noise-limited readout.
    Montecarlo {
        #[arg(long, value_name = "LIST")]
        n: Option<String>,
        /// Number of trials (overrides config `trials`).
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated factors applied to the sample number.
        #[arg(long, default_value = "1", value_name = "LIST")]
        nu_scale: String,
    },
    /// Run the full invariant suite.
    Validate,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::from_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for assignment in &cli.set {
        config.apply_override(assignment)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Montecarlo { trials: Some(trials), .. } = cli.command {
        config.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn modes(list: &Option<String>, config: &ExperimentConfig) -> Result<Vec<usize>, Failure> {
    match list {
        Some(text) => Ok(parse_modes(text)?),
        None => Ok(config.modes.clone()),
    }
}

fn parse_scales(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Failure::Usage(format!("invalid nu scale {s:?}"))))
        .collect()
}

fn run_command(cli: &Cli, config: &ExperimentConfig) -> CommandResult {
    match &cli.command {
        Command::Bounds { n, s } => {
            if let Some(s) = s {
                if !(*s >= 1.0) {
                    return Err(Failure::Usage(format!("--s must be at least 1, got {s}")));
                }
            }
            let list = if s.is_some() && n.is_none() { Vec::new() } else { modes(n, config)? };
            commands::bounds(config, &list, *s)
        }
        Command::Cfim { n, method } => commands::cfim(config, &modes(n, config)?, &commands::parse_method(method)?),
        Command::Table1 { no_mc } => commands::table1(config, !no_mc),
        Command::Montecarlo { n, nu_scale, .. } => commands::montecarlo(config, &modes(n, config)?, &parse_scales(nu_scale)?),
        Command::Validate => commands::validate(config),
    }
}

fn write_output(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> ExitCode {
    let outcome = load_config(&cli).and_then(|config| run_command(&cli, &config)).and_then(|report| {
        write_output(cli.out.as_deref(), &report.body)?;
        Ok(report.violations)
    });
    match outcome {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("invariant failed: {v}");
            }
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numeric(err)) => {
            eprintln!("numeric error: {err}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(err) => {
            let informational = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            if informational {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}
