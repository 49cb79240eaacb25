mod cli;
mod commands;
mod config;
mod error;

use std::path::Path;
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches};
use serde::Serialize;

use cli::{Cli, Command, TestCommand};
use config::{resolve, RunConfig};
use error::CliError;

fn leaf(matches: &ArgMatches) -> &ArgMatches {
    match matches.subcommand() {
        Some((_, sub)) => leaf(sub),
        None => matches,
    }
}

fn init_threads(cfg: &RunConfig) -> Result<(), CliError> {
    let threads = match cfg.threads {
        Some(n) => Some(n),
        None => match std::env::var("TVDAR_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                CliError::Input(format!(
                    "TVDAR_THREADS must be a positive integer, got `{v}`"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Input("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    Ok(())
}

type Runner = fn(RunConfig) -> Result<(commands::Outcome, RunConfig), CliError>;

fn dispatch<A: Serialize>(
    args: &A,
    config: Option<&Path>,
    matches: &ArgMatches,
    run: Runner,
) -> Result<(), CliError> {
    let cfg = resolve(args, config, leaf(matches))?;
    init_threads(&cfg)?;
    let to_stdout = cfg.series_out.as_deref() == Some(Path::new("-"));
    let (outcome, cfg) = run(cfg)?;
    let written = commands::write(&outcome, &cfg)?;
    let dir = cfg
        .out
        .as_deref()
        .unwrap_or(Path::new("tvdar-out"))
        .display()
        .to_string();
    for line in &outcome.lines {
        if to_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
    let done = format!("wrote {written} files to {dir}");
    if to_stdout {
        eprintln!("{done}");
    } else {
        println!("{done}");
    }
    Ok(())
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| CliError::Input(e.to_string()))?;
    match &cli.command {
        Command::Simulate(a) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::simulate)
        }
        Command::Fit(a) => dispatch(a, a.common.config.as_deref(), matches, commands::fit),
        Command::FitLocal(a) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::fit_local)
        }
        Command::Stability(a) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::stability)
        }
        Command::Forecast(a) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::forecast)
        }
        Command::Test(TestCommand::Whiteness(a)) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::whiteness)
        }
        Command::Test(TestCommand::Homoscedasticity(a)) => dispatch(
            a,
            a.common.config.as_deref(),
            matches,
            commands::homoscedasticity,
        ),
        Command::Test(TestCommand::Xi(a)) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::xi)
        }
        Command::Describe(a) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::describe)
        }
        Command::Montecarlo(a) => {
            dispatch(a, a.common.config.as_deref(), matches, commands::montecarlo)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
