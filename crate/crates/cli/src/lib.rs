//! Command-line driver: compile a polynomial Hamiltonian to a gate circuit,
//! emulate it, and compare against classical references.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{BackendKind, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Threshold(String),
    #[error("numerical blow-up: {0}")]
    BlowUp(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Threshold(_) => 3,
            CliError::BlowUp(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cvkvn", version, about = "Koopman-von Neumann circuits for polynomial Hamiltonians")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the exact symbolic identities behind the gate synthesis.
    Identities,
    /// Print the KvN terms and the compiled gate circuit.
    Synth(RunArgs),
    /// Run the circuit and write density, moments and samples.
    Evolve(RunArgs),
    /// Run the circuit and compare it against a classical reference.
    Verify(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory, overriding `outputs` in the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print the KvN Hamiltonian as `#` comment lines.
    #[arg(long)]
    pub dump_kvn: bool,
    /// Simulation backend, overriding `backend` in the config.
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
}

impl RunArgs {
    fn experiment(&self) -> Result<config::Experiment, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        if let Some(out) = &self.out {
            cfg.outputs = Some(out.clone());
        }
        cfg.validate()
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Identities => commands::cmd_identities(stdout),
        Command::Synth(args) => {
            let exp = args.experiment()?;
            commands::cmd_synth(&exp, args.dump_kvn, stdout)
        }
        Command::Evolve(args) => {
            let exp = args.experiment()?;
            commands::cmd_evolve(&exp, args.dump_kvn, stdout).map(|_| ())
        }
        Command::Verify(args) => {
            let exp = args.experiment()?;
            commands::cmd_verify(&exp, args.dump_kvn, stdout)
        }
    }
}
