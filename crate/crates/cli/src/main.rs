//! `affect`: batch pipeline commands, the session service, and a client for it.
//!
//! Exit status: 0 on success, 1 on a domain error (bad data or config),
//! 2 on a usage error. Results go to stdout, logs to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use affect_core::forest::TrainConfig;
use affect_core::EmotionLabel;

mod batch;
mod remote;

#[derive(Debug, Parser)]
#[command(name = "affect", version, about = "EEG emotion classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record a labeled dataset from synthetic or replayed frames.
    Collect(batch::CollectArgs),
    /// Drop IQR outliers and write the per-class outlier report.
    Clean(batch::CleanArgs),
    /// Train a random forest and write the model file.
    Train(batch::TrainArgs),
    /// Repeated random-holdout validation.
    Validate(batch::ValidateArgs),
    /// Repeated holdout for each two-class model.
    Pairwise(batch::PairwiseArgs),
    /// Accuracy as trees are added; picks the stopping point.
    Sweep(batch::SweepArgs),
    /// Per-class channel variances, optionally compared with a reference table.
    Variance(batch::VarianceArgs),
    /// Run one real-time session headlessly and print the prediction log.
    SimulateSession(batch::SimulateArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Talk to a running service.
    Remote(remote::RemoteArgs),
}

/// Forest hyperparameters shared by every training command.
#[derive(Debug, Clone, Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 25)]
    trees: usize,
    /// Channels considered at each split.
    #[arg(long, default_value_t = 3)]
    features: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ForestArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            n_trees: self.trees,
            features_per_split: self.features,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_leaf,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "DATA_DIR", default_value = "./data")]
    data_dir: PathBuf,
    /// Replay speed relative to real time; `inf` runs unpaced.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

fn parse_label(s: &str) -> Result<EmotionLabel, String> {
    s.to_ascii_uppercase().parse().map_err(|e: affect_core::Error| e.to_string())
}

async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let config = affect_service::ServiceConfig {
        data_dir: args.data_dir,
        speed: args.speed,
        ..Default::default()
    };
    let state = affect_service::AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    affect_service::serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Collect(a) => batch::collect(a),
        Command::Clean(a) => batch::clean(a),
        Command::Train(a) => batch::train(a),
        Command::Validate(a) => batch::validate(a),
        Command::Pairwise(a) => batch::pairwise(a),
        Command::Sweep(a) => batch::sweep(a),
        Command::Variance(a) => batch::variance(a),
        Command::SimulateSession(a) => batch::simulate(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
        Command::Remote(a) => tokio::runtime::Runtime::new()?.block_on(remote::run(a)),
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::from(1)
        }
    }
}
