use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clinfuse::pipeline::EmbedMode;
use clinfuse_cli::{commands, CliError, ExperimentConfig};

/// Clinical outcome prediction from vitals and note embeddings.
#[derive(Parser)]
#[command(name = "clinfuse", version)]
struct Cli {
    /// Experiment config (TOML). Missing sections take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Note,
    Entity,
}

impl From<Mode> for EmbedMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Note => EmbedMode::Note,
            Mode::Entity => EmbedMode::Entity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort into `paths.data_dir`.
    Synth,
    /// Discretize, impute, standardize and split; aggregate daily notes.
    Preprocess,
    /// Train document embeddings and embed every day document.
    Embed {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Train the configured row over all protocol seeds and keep the best.
    Train {
        /// Worker threads for the seed runs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Bootstrap test-set evaluation of the trained row.
    Evaluate,
    /// 2-D t-SNE of the day embeddings.
    Tsne {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Collect evaluation reports into the result table.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Embed { mode } => commands::embed(&cfg, mode.into()),
        Command::Train { jobs } => commands::train(&cfg, jobs),
        Command::Evaluate => commands::evaluate(&cfg).map(|_| ()),
        Command::Tsne { mode } => commands::tsne(&cfg, mode.into()),
        Command::Report => commands::report(&cfg).map(|t| print!("{t}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CLINFUSE_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
