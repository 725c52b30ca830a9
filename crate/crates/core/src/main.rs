use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mslmn::cli;

#[derive(Parser)]
#[command(name = "mslmn", version, about = "Multiscale linear memory network experiments")]
struct Args {
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on the test split of a config's dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a regression checkpoint freely and write generated.csv.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long, default_value_t = 300)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a sequence autoencoder on feature CSV files.
    LaesFit {
        /// State size.
        #[arg(short, long)]
        p: usize,
        /// Stream the data matrix in slices.
        #[arg(long)]
        slices: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print a checkpoint's architecture and parameter count.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let mut stdout = std::io::stdout().lock();
    let result = match &args.command {
        Command::Train { config, out, seed } => cli::cmd_train(
            config,
            out.as_deref(),
            *seed,
            cli::thread_budget(),
            args.quiet,
            &mut stdout,
        )
        .map(drop),
        Command::Eval {
            checkpoint,
            config,
            out,
        } => cli::cmd_eval(checkpoint, config, out.as_deref(), &mut stdout).map(drop),
        Command::Generate { checkpoint, n, out } => {
            cli::cmd_generate(checkpoint, *n, out.as_deref(), &mut stdout).map(drop)
        }
        Command::LaesFit { p, slices, out, files } => cli::cmd_laes_fit(files, *p, *slices, out, &mut stdout).map(drop),
        Command::Inspect { checkpoint } => cli::cmd_inspect(checkpoint, &mut stdout),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
