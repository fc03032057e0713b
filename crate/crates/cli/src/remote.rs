use std::path::PathBuf;
use std::time::Duration;

use anyhow::Result;
use clap::{Args, Subcommand};
use futures::StreamExt;
use serde::Serialize;

use affect_client::{is_stopped, Client};
use affect_core::api::{CreateSessionRequest, SourceSpec, TrainRequest};
use affect_core::realtime::SessionConfig;
use affect_core::{EmotionLabel, SubjectInfo};

use crate::{parse_label, ForestArgs};

#[derive(Debug, Args)]
pub struct RemoteArgs {
    #[arg(long, env = "AFFECT_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    command: RemoteCommand,
}

#[derive(Debug, Subcommand)]
enum RemoteCommand {
    /// List sessions.
    Sessions,
    /// Show one session.
    Session { id: String },
    /// Create an IDLE session.
    Create(CreateArgs),
    Start { id: String },
    Stop { id: String },
    /// Print session events as NDJSON until the session stops.
    Watch { id: String },
    /// Model vs session channel variances of a stopped session.
    VarianceReport { id: String },
    Models,
    /// Submit a training job and wait for it.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
        /// Seconds to wait for the job.
        #[arg(long, default_value_t = 600)]
        timeout: u64,
    },
    Job { id: String },
}

#[derive(Debug, Args)]
struct CreateArgs {
    #[arg(long)]
    model: String,
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    replay: Option<PathBuf>,
    #[arg(long, value_parser = parse_label)]
    synthetic: Option<EmotionLabel>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    code: String,
    #[arg(long)]
    age: u32,
    #[arg(long, default_value = "")]
    gender: String,
    #[arg(long, default_value = "")]
    civil_status: String,
    #[arg(long, default_value = "")]
    education: String,
    #[arg(long)]
    stop_at: Option<f64>,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub async fn run(args: RemoteArgs) -> Result<()> {
    let client = Client::new(args.url);
    match args.command {
        RemoteCommand::Sessions => print_json(&client.list_sessions().await?),
        RemoteCommand::Session { id } => print_json(&client.get_session(&id).await?),
        RemoteCommand::Create(a) => {
            let source = match (a.replay, a.synthetic) {
                (Some(path), _) => SourceSpec::Replay { path, rate_hz: None },
                (None, Some(label)) => SourceSpec::Synthetic { profile: None, label, seed: a.seed },
                (None, None) => anyhow::bail!("pass --replay or --synthetic"),
            };
            let req = CreateSessionRequest {
                subject: SubjectInfo {
                    code: a.code,
                    age: a.age,
                    gender: a.gender,
                    civil_status: a.civil_status,
                    education: a.education,
                },
                source,
                model_id: a.model,
                config: a.stop_at.map(|t| SessionConfig { stop_at_s: Some(t), ..SessionConfig::default() }),
            };
            print_json(&client.create_session(&req).await?)
        }
        RemoteCommand::Start { id } => print_json(&client.start_session(&id).await?),
        RemoteCommand::Stop { id } => print_json(&client.stop_session(&id).await?),
        RemoteCommand::Watch { id } => {
            let mut events = client.events(&id).await?;
            while let Some(event) = events.next().await {
                let event = event?;
                println!("{}", serde_json::to_string(&event)?);
                if is_stopped(&event) {
                    break;
                }
            }
            Ok(())
        }
        RemoteCommand::VarianceReport { id } => print_json(&client.variance_report(&id).await?),
        RemoteCommand::Models => print_json(&client.list_models().await?),
        RemoteCommand::Train { dataset, forest, timeout } => {
            let job = client.submit_train(&TrainRequest { dataset, config: forest.config() }).await?;
            tracing::info!("job {} submitted", job.id);
            let done = client.wait_for_job(&job.id, Duration::from_secs(timeout)).await?;
            print_json(&done)?;
            match done.error {
                Some(e) => anyhow::bail!("training failed: {e}"),
                None => Ok(()),
            }
        }
        RemoteCommand::Job { id } => print_json(&client.get_job(&id).await?),
    }
}
