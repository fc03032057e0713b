use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use anyhow::{bail, Context, Result};
use clap::Args;

use affect_core::acquisition::{replay_source, synthetic_source, FrameSource, SyntheticProfile};
use affect_core::dataset_io::{load_dataset, save_dataset};
use affect_core::evaluation::{
    pairwise_models, repeated_holdout, tree_count_sweep, variance_table, HoldoutOptions, PairwiseOptions,
    SweepOptions, ValidationSummary, VarianceTable,
};
use affect_core::forest::{train as train_forest, Forest};
use affect_core::iqr::{clean_dataset, IqrConfig};
use affect_core::realtime::{compare_session_variance, run_session, SessionConfig, SessionEvent};
use affect_core::{Dataset, EmotionLabel};

use crate::{parse_label, ForestArgs};

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_profile(path: Option<&Path>) -> Result<SyntheticProfile> {
    Ok(match path {
        Some(p) => SyntheticProfile::load(p)?,
        None => SyntheticProfile::default(),
    })
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long)]
    out: PathBuf,
    /// Replay this CSV instead of generating synthetic frames.
    #[arg(long, conflicts_with_all = ["labels", "per_class", "profile"])]
    replay: Option<PathBuf>,
    /// Label assigned to every replayed record.
    #[arg(long, value_parser = parse_label, requires = "replay")]
    label: Option<EmotionLabel>,
    /// Synthetic classes to record, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_label)]
    labels: Vec<EmotionLabel>,
    #[arg(long, default_value_t = 8000)]
    per_class: u64,
    /// Synthetic profile JSON; defaults to the bundled profile.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value = "P01")]
    subject: String,
    /// Frame rate for replayed timestamps.
    #[arg(long, default_value_t = 33.0)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn collect(a: CollectArgs) -> Result<()> {
    let ds = match &a.replay {
        Some(path) => {
            let mut records: Vec<_> = replay_source(load(path)?, a.rate)?.collect();
            for r in &mut records {
                if a.label.is_some() {
                    r.label = a.label;
                }
                r.subject_id = a.subject.clone();
            }
            let ds = Dataset::new(records);
            ds.require_labeled().context("replayed records need labels; pass --label")?;
            ds
        }
        None => {
            let profile = load_profile(a.profile.as_deref())?;
            let labels = if a.labels.is_empty() { EmotionLabel::ALL.to_vec() } else { a.labels.clone() };
            let mut records = Vec::new();
            for (i, label) in labels.into_iter().enumerate() {
                let source = synthetic_source(&profile, label, affect_core::rng::derive_seed(a.seed, i as u64))?
                    .with_subject(a.subject.clone())
                    .with_limit(a.per_class);
                records.extend(source);
            }
            Dataset::new(records)
        }
    };
    save_dataset(&ds, &a.out)?;
    tracing::info!("wrote {} records to {}", ds.len(), a.out.display());
    print!("{}", counts_csv(&ds));
    Ok(())
}

fn counts_csv(ds: &Dataset) -> String {
    let mut out = String::from("class,records\n");
    for (label, n) in ds.class_counts() {
        let _ = writeln!(out, "{label},{n}");
    }
    out
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    outlier_factor: f64,
    #[arg(long, default_value_t = 6.0)]
    extreme_factor: f64,
    /// Fences per class instead of over the pooled data.
    #[arg(long)]
    per_class: bool,
    /// Also write the outlier report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn clean(a: CleanArgs) -> Result<()> {
    let cfg = IqrConfig {
        outlier_factor: a.outlier_factor,
        extreme_factor: a.extreme_factor,
        per_class: a.per_class,
    };
    cfg.validate()?;
    let (cleaned, report) = clean_dataset(&load(&a.input)?, &cfg)?;
    save_dataset(&cleaned, &a.out)?;
    let csv = report.to_csv();
    if let Some(path) = &a.report {
        write_text(path, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write the training data's per-class variance table here.
    #[arg(long)]
    variance_out: Option<PathBuf>,
    #[command(flatten)]
    forest: ForestArgs,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let forest = train_forest(&ds, &a.forest.config())?;
    forest.save(&a.out)?;
    if let Some(path) = &a.variance_out {
        write_text(path, &variance_table(&ds)?.to_csv())?;
    }
    println!(
        "{}",
        serde_json::json!({
            "model": a.out,
            "n_trees": forest.trees.len(),
            "labels": forest.labels,
            "records": ds.len(),
        })
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    /// Also write the per-run CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the mean confusion matrix here.
    #[arg(long)]
    confusion_out: Option<PathBuf>,
    #[command(flatten)]
    forest: ForestArgs,
}

fn summary_lines(s: &ValidationSummary) -> String {
    let mut out = format!("# mean_accuracy={}\n# std_accuracy={}\n", s.mean_accuracy, s.std_accuracy);
    match &s.normality {
        Some(n) => {
            let _ = write!(out, "# shapiro_w={}\n# p_value={}\n", n.statistic, n.p_value);
        }
        None => out.push_str("# shapiro_w=NA\n# p_value=NA\n"),
    }
    out
}

pub fn validate(a: ValidateArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let opts = HoldoutOptions { n_runs: a.runs, train_fraction: a.train_frac, base_seed: a.forest.seed };
    let summary = repeated_holdout(&ds, &a.forest.config(), &opts)?;
    let runs = summary.runs_csv();
    if let Some(path) = &a.out {
        write_text(path, &runs)?;
    }
    if let Some(path) = &a.confusion_out {
        write_text(path, &summary.mean_confusion.to_csv())?;
    }
    print!("{runs}{}", summary_lines(&summary));
    Ok(())
}

#[derive(Debug, Args)]
pub struct PairwiseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Records sampled per pair before the holdout runs.
    #[arg(long, default_value_t = 250_000)]
    subset: usize,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    #[command(flatten)]
    forest: ForestArgs,
}

pub fn pairwise(a: PairwiseArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let opts = PairwiseOptions {
        subset_size: a.subset,
        holdout: HoldoutOptions { n_runs: a.runs, train_fraction: a.train_frac, base_seed: a.forest.seed },
    };
    let mut out = String::from("pair,sampled,mean_accuracy,std_accuracy,shapiro_w,p_value\n");
    for p in pairwise_models(&ds, &a.forest.config(), &opts)? {
        let (w, pv) = match &p.summary.normality {
            Some(n) => (n.statistic.to_string(), n.p_value.to_string()),
            None => ("NA".into(), "NA".into()),
        };
        let _ = writeln!(
            out,
            "{}-{},{},{},{},{w},{pv}",
            p.pair.0, p.pair.1, p.sampled, p.summary.mean_accuracy, p.summary.std_accuracy
        );
    }
    print!("{out}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_trees: usize,
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    #[arg(long, default_value_t = 3)]
    features: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let cfg = ForestArgs {
        trees: a.max_trees,
        features: a.features,
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
        seed: a.seed,
    }
    .config();
    let opts = SweepOptions { epsilon: a.epsilon, max_trees: a.max_trees, train_fraction: a.train_frac };
    let result = tree_count_sweep(&ds, &cfg, &opts)?;
    print!("{}# chosen={}\n# saturated={}\n", result.to_csv(), result.chosen, result.saturated);
    Ok(())
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Reference variance table; prints model, session and ratio rows.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn variance(a: VarianceArgs) -> Result<()> {
    let ds = load(&a.input)?;
    let csv = match &a.compare {
        None => variance_table(&ds)?.to_csv(),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let reference = VarianceTable::from_csv(&text)?;
            compare_session_variance(&ds.records, &reference)?.to_csv()
        }
    };
    if let Some(path) = &a.out {
        write_text(path, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Replay this CSV as the headset stream.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    replay: Option<PathBuf>,
    /// Generate frames from this class's synthetic profile.
    #[arg(long, value_parser = parse_label)]
    synthetic: Option<EmotionLabel>,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30.0)]
    calibration: f64,
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    #[arg(long, default_value_t = 300.0)]
    duration: f64,
    #[arg(long, default_value_t = 33.0)]
    rate: f64,
    /// Operator stop at this many seconds.
    #[arg(long)]
    stop_at: Option<f64>,
    /// Save meta.json, frames.csv and predictions.ndjson here.
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let forest = Forest::load(&a.model)?;
    let cfg = SessionConfig {
        calibration_s: a.calibration,
        window_s: a.window,
        session_s: a.duration,
        rate_hz: a.rate,
        stop_at_s: a.stop_at,
        ..SessionConfig::default()
    };
    cfg.validate()?;
    let mut source: Box<dyn FrameSource> = match (&a.replay, a.synthetic) {
        (Some(path), _) => Box::new(replay_source(load(path)?, a.rate)?),
        (None, Some(label)) => {
            let profile = load_profile(a.profile.as_deref())?;
            if profile.rate_hz != a.rate {
                tracing::warn!("profile rate {} Hz, session rate {} Hz", profile.rate_hz, a.rate);
            }
            Box::new(synthetic_source(&profile, label, a.seed)?)
        }
        (None, None) => bail!("pass --replay or --synthetic"),
    };
    let mut sink = |event: SessionEvent| {
        if let SessionEvent::State(change) = event {
            tracing::info!("{} at {} s", change.state, change.t_s);
        }
    };
    let log = run_session(source.as_mut(), &forest, &cfg, &mut sink, &AtomicBool::new(false))?;
    if let Some(dir) = &a.log_dir {
        log.save(dir)?;
    }
    if !log.skipped_windows.is_empty() {
        tracing::warn!("skipped empty windows: {:?}", log.skipped_windows);
    }
    print!("{}", log.predictions_csv());
    Ok(())
}
