mod args;
mod commands;
mod reproduce;

use std::process::ExitCode;

use clap::Parser;

use args::{ArenaCommand, Cli, Command};

/// Bad flag values; exits with status 1 like a parse failure.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("ARENA_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| UsageError(format!("ARENA_THREADS=`{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a)?,
        Command::Analyze(a) => commands::analyze(&a)?,
        Command::TrainForecaster(a) => commands::forecast(&a, false)?,
        Command::WalkForward(a) => commands::forecast(&a, true)?,
        Command::TrainArena(a) | Command::Arena(ArenaCommand::Train(a)) => commands::train_arena(&a)?,
        Command::Recommend(a) | Command::Arena(ArenaCommand::Recommend(a)) => commands::recommend(&a)?,
        Command::Bco(a) => commands::bco(&a)?,
        Command::Gradcheck(a) => return commands::gradcheck(&a),
        Command::Reproduce(a) => reproduce::reproduce(&a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
