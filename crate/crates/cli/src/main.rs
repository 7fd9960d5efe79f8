mod config;
mod experiments;
mod output;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{ConfigError, ExperimentConfig, ExperimentKind};
use experiments::Status;

const EXIT_VIOLATION: u8 = 2;
const EXIT_UNCONVERGED: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(
    version,
    about = "Fidelity bounds, optimizations and open-system runs for counter-diabatic Landau-Zener driving"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    BoundSweep,
    DynamicsSweep,
    Optimize,
    StaVerify,
    BathFunctionals,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::BoundSweep => Self::BoundSweep,
            Kind::DynamicsSweep => Self::DynamicsSweep,
            Kind::Optimize => Self::Optimize,
            Kind::StaVerify => Self::StaVerify,
            Kind::BathFunctionals => Self::BathFunctionals,
        }
    }
}

#[derive(clap::Args)]
struct Source {
    /// TOML experiment config.
    config: Option<PathBuf>,
    /// Experiment to run; overrides `experiment` in the file.
    #[arg(short, long, value_enum)]
    experiment: Option<Kind>,
    /// Override a config key, e.g. `--set bath.lambda=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Source {
    fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::resolve(
            self.config.as_deref(),
            self.experiment.map(Into::into),
            &self.overrides,
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV and sidecar files.
    Run(Source),
    /// Print the fully resolved config without running anything.
    Config(Source),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use cdbound_core::Error as E;
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<E>() {
        Some(
            E::Convergence(_)
            | E::Integrability { .. }
            | E::InsufficientMatsubara { .. }
            | E::InvalidState(_),
        ) => EXIT_UNCONVERGED,
        Some(_) => EXIT_CONFIG,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Config(src) => src.resolve().map_err(Into::into).map(|c| {
            print!("{}", c.to_toml());
            Status::Ok
        }),
        Command::Run(src) => src.resolve().map_err(anyhow::Error::from).and_then(|cfg| {
            let out = experiments::run(&cfg)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            Ok(out.status)
        }),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violated) => ExitCode::from(EXIT_VIOLATION),
        Ok(Status::Unconverged) => ExitCode::from(EXIT_UNCONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
