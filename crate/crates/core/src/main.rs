use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use affinity_kg::commands;
use affinity_kg::config::{help_table, RunConfig};
use affinity_kg::{Error, Result};

/// Surname-affinity knowledge graph pipeline.
#[derive(Parser)]
#[command(name = "affinity-kg", version)]
struct Cli {
    #[command(flatten)]
    opts: RunOpts,

    #[command(subcommand)]
    command: Command,
}

/// Accepted both before and after the subcommand name.
#[derive(Args, Clone, Default)]
struct RunOpts {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population with planted affinity pairs.
    GenSynthetic {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the decile-stratified affinity network from individual records.
    BuildNetwork {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a triple file into train/valid/test folds.
    Split {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a fold directory and write a checkpoint.
    Train {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the grid.* hyperparameters and keep the best cell.
    GridSearch {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank a fold with a checkpoint and write metrics.
    Evaluate {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        fold: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shared-nearest-neighbor analysis of test-fold hits.
    Analyze {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write each relation matrix as CSV plus its asymmetry index.
    ExportHeatmaps {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn opts(&self) -> &RunOpts {
        match self {
            Command::GenSynthetic { opts, .. }
            | Command::BuildNetwork { opts, .. }
            | Command::Split { opts, .. }
            | Command::Train { opts, .. }
            | Command::GridSearch { opts, .. }
            | Command::Evaluate { opts, .. }
            | Command::Analyze { opts, .. }
            | Command::ExportHeatmaps { opts, .. } => opts,
        }
    }
}

/// Defaults, then the config file, then every `--set` in command-line order.
fn load_config(cli: &Cli) -> Result<RunConfig> {
    let (top, sub) = (&cli.opts, cli.command.opts());
    let file = match (&top.config, &sub.config) {
        (Some(_), Some(_)) => return Err(Error::InvalidArgument("--config given twice".into())),
        (a, b) => a.as_ref().or(b.as_ref()),
    };
    let mut config = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_text(&text)?;
    }
    for o in top.overrides.iter().chain(&sub.overrides) {
        config.apply_override(o)?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::GenSynthetic { out, .. } => commands::gen_synthetic(&config, out),
        Command::BuildNetwork { records, out, .. } => commands::build_network(&config, records, out),
        Command::Split { triples, out, .. } => commands::split(&config, triples, out),
        Command::Train { data, out, .. } => commands::train(&config, data, out),
        Command::GridSearch { data, out, .. } => commands::grid_search(&config, data, out),
        Command::Evaluate { data, checkpoint, fold, out, .. } => {
            commands::evaluate(&config, data, checkpoint, commands::parse_fold(fold)?, out)
        }
        Command::Analyze { data, checkpoint, out, .. } => commands::analyze(&config, data, checkpoint, out),
        Command::ExportHeatmaps { data, checkpoint, out, .. } => {
            commands::export_heatmaps(&config, data, checkpoint, out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let matches = Cli::command().after_long_help(help_table()).after_help(help_table()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
