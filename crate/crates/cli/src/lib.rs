//! Command-line front end: `simulate`, `fit`, `predict`, `evaluate` and the
//! canned `experiment` runs. [`run`] is the whole program minus process exit.

pub mod args;
mod commands;

use std::ffi::OsString;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command, ConfigFile, Experiment};
use commands::Global;

pub const DEFAULT_SEED: u64 = 1;

/// Exit status for command-line and configuration errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running a valid command.
pub const EXIT_FAILURE: i32 = 1;

/// Error carrying the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

fn usage(error: anyhow::Error) -> CliError {
    CliError { code: EXIT_USAGE, error }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> std::result::Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(usage(anyhow::anyhow!(e.render().to_string().trim_end().to_owned()))),
    };
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(usage)?,
        None => ConfigFile::default(),
    };
    let global = Global {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        threads: cli.threads.or(file.threads),
    };
    let exec = || dispatch(&global, cli.command, file);
    let result = match global.threads {
        Some(0) => return Err(usage(anyhow::anyhow!("--threads must be at least 1"))),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("building thread pool")
            .map_err(usage)?
            .install(exec),
        None => exec(),
    };
    result.map_err(|error| {
        let code = if error.downcast_ref::<args::ConfigError>().is_some() {
            EXIT_USAGE
        } else {
            EXIT_FAILURE
        };
        CliError { code, error }
    })
}

fn dispatch(g: &Global, command: Command, file: ConfigFile) -> Result<()> {
    match command {
        Command::Simulate(a) => commands::simulate(g, a.over(file.simulate.unwrap_or_default())),
        Command::Fit(a) => commands::fit(g, a.over(file.fit.unwrap_or_default())),
        Command::Predict(a) => commands::predict_cmd(g, a.over(file.predict.unwrap_or_default())),
        Command::Evaluate(a) => commands::evaluate(g, a.over(file.evaluate.unwrap_or_default())),
        Command::Experiment(Experiment::Fig1(a)) => commands::fig1(g, a.over(file.fig1.unwrap_or_default())),
        Command::Experiment(Experiment::Fig2(a)) => commands::fig2(g, a.over(file.fig2.unwrap_or_default())),
        Command::Experiment(Experiment::Equivalence(a)) => {
            commands::equivalence(g, a.over(file.equivalence.unwrap_or_default()))
        }
    }
}
