use clap::{Parser, Subcommand};
use std::path::PathBuf;
use unhap::experiments::Scale;

#[derive(Parser)]
#[command(name = "unhap", version, about = "Unmix spurious detections from structured marked event streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled mixture realization and write it as an event file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model to an event file (ground-truth labels, if present, are ignored).
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Event CSV; overrides fit.events from the config.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score fit artifacts against ground truth and/or a test sequence.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named experiment sweep and write its result tables.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => unhap::cli::cmd_simulate(&config, &out, seed),
        Command::Fit { config, events, out, seed } => {
            unhap::cli::cmd_fit(&config, events.as_deref(), &out, seed)
        }
        Command::Score { config, out, seed } => unhap::cli::cmd_score(&config, &out, seed),
        Command::Experiment { config, out, scale, seed } => {
            let scale = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            };
            unhap::cli::cmd_experiment(&config, &out, scale, seed)
        }
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
