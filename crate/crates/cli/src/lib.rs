//! Experiment runner behind the `sverl` binary.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod svg;

use std::path::PathBuf;

pub use config::{Cli, Command, ExperimentConfig, Method};
pub use error::{CliError, CliResult};
pub use runner::{Artifact, Outcome, Session};

/// Resolve the configuration, run the subcommand and write its files.
/// Returns the paths written and a summary for the terminal.
pub fn execute(command: &Command) -> CliResult<(Vec<PathBuf>, String)> {
    let config = ExperimentConfig::resolve(command.options())?;
    let out = config.out.clone();
    let outcome = run(command.name(), config)?;
    let written = runner::write_artifacts(&out, &outcome.artifacts)?;
    Ok((written, outcome.summary))
}

/// Run a subcommand by name without touching the filesystem.
pub fn run(command: &str, config: ExperimentConfig) -> CliResult<Outcome> {
    if command == "dump-mdp" {
        return runner::dump_mdp(&config);
    }
    let mut session = Session::new(config)?;
    match command {
        "solve" => session.solve(),
        "explain" => session.explain(),
        "compare" => session.compare(),
        "policy-actions" => session.policy_actions(),
        "converge" => session.converge(),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}
