use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod data;
mod error;
mod run;
mod settings;

use error::CliError;
use run::Run;
use settings::Settings;

/// State-stream transformer experiments at desk scale.
#[derive(Parser)]
#[command(name = "sst", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key=value settings file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` setting
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override one setting (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Train a model; writes a checkpoint and loss CSVs
    Train,
    /// Generate from a checkpoint at flat, staged or probe-driven depth
    Generate,
    /// Pass/fail matrix over flat depths with staged capacities
    Evaluate,
    /// Overlap, basin, logit and precision metrics from a trace directory
    Analyze,
    /// Label, cross-validate, train and ablate a halting probe
    Probe,
    /// Run the acceptance suite
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Generate => "generate",
            Command::Evaluate => "evaluate",
            Command::Analyze => "analyze",
            Command::Probe => "probe",
            Command::Verify => "verify",
        }
    }
}

fn dispatch(command: Command, common: Common) -> Result<(), CliError> {
    let mut settings = Settings::load(common.config.as_deref(), &common.set)?;
    let mut seed = settings.get("seed", 0u64)?;
    if let Some(s) = common.seed {
        seed = s;
        settings.get("seed", s)?;
    }
    let threads = settings.get("threads", 1usize)?;
    if threads == 0 {
        return Err(CliError::Validation("threads must be at least 1".into()));
    }
    // Only fails if a pool already exists, which cannot happen here.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let out = common.out.unwrap_or_else(|| PathBuf::from("sst-out").join(command.name()));
    let mut run = Run::new(command.name(), out, seed, common.config, common.set);
    let s = &mut settings;
    match command {
        Command::Train => commands::train::run(&mut run, s),
        Command::Generate => commands::generate::run(&mut run, s),
        Command::Evaluate => commands::evaluate::run(&mut run, s),
        Command::Analyze => commands::analyze::run(&mut run, s),
        Command::Probe => commands::probe::run(&mut run, s),
        Command::Verify => commands::verify::run(&mut run, s),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            // A bare `sst` shows the usage text as a validation error.
            let code = if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { code };
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command, cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
