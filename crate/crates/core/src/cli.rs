//! Command-line front end: `mine`, `curate`, `eval`, `serve`, `replay` and
//! `prompt`. Usage errors exit with 2, data errors with 1.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::context::build_context;
use crate::curator::{build_batches, filter_all, weight_languages, CurationPolicy, FilterSummary};
use crate::engine::{prompt_fingerprint, PasteInput, SuggestionEngine};
use crate::journal::ingest;
use crate::metrics::{offline_report, online_report, EvalRecord, SuggestionEvent};
use crate::miner::{mine, MinerConfig, PasteFixExample};
use crate::service::{build_backend, build_state, load_script, serve, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "smartpaste",
    version,
    about = "Mine, curate, evaluate and serve post-paste edit suggestions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine paste-fix examples from snapshot/delta journals.
    Mine(MineArgs),
    /// Filter examples and assemble training batches.
    Curate(CurateArgs),
    /// Run a backend over examples and print the offline report.
    Eval(EvalArgs),
    /// Start the suggestion service.
    Serve(ServeArgs),
    /// Compute online metrics from a telemetry log.
    Replay(ReplayArgs),
    /// Print the prompt and its fingerprint for each example.
    Prompt(PromptArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Journal records, `-` for stdin.
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    /// Example records, `-` for stdout.
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
    /// Miner thresholds (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    /// Kept examples.
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
    /// Policy, language frequencies and batching (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference time for the age filter, ms since the epoch. Defaults to now.
    #[arg(long)]
    pub now_ms: Option<u64>,
    /// Write batches here, one JSON object per batch.
    #[arg(long)]
    pub batches: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub no_edit_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Examples (or evaluation records with `--from-records`).
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    /// Report JSON, stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Service config selecting backend and engine settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scripted backend file; overrides the configured backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Also write the per-example evaluation records here.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Treat the input as evaluation records instead of examples.
    #[arg(long)]
    pub from_records: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long, short, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, short, default_value = "-")]
    pub output: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Curation settings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurateConfig {
    pub policy: CurationPolicy,
    /// Observed paste frequency per language; batching is skipped when empty.
    pub frequencies: BTreeMap<String, f64>,
    pub batch_size: usize,
    pub no_edit_fraction: f64,
    pub seed: u64,
}

impl Default for CurateConfig {
    fn default() -> Self {
        CurateConfig {
            policy: CurationPolicy::default(),
            frequencies: BTreeMap::new(),
            batch_size: 32,
            no_edit_fraction: 0.3,
            seed: 0,
        }
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mine(a) => run_mine(a),
        Command::Curate(a) => run_curate(a),
        Command::Eval(a) => run_eval(a),
        Command::Serve(a) => run_serve(a),
        Command::Replay(a) => run_replay(a),
        Command::Prompt(a) => run_prompt(a),
    }
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads newline-delimited records, skipping summary lines (objects with a
/// `record` field).
fn read_records<T: serde::de::DeserializeOwned>(reader: Box<dyn BufRead>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).with_context(|| format!("line {}", n + 1))?;
        if value.get("record").is_some() {
            continue;
        }
        out.push(serde_json::from_value(value).with_context(|| format!("line {}", n + 1))?);
    }
    Ok(out)
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn run_mine(args: MineArgs) -> Result<()> {
    let config: MinerConfig = read_toml(args.config.as_deref())?;
    config.validate()?;
    let (journeys, ingest_stats) = ingest(open_input(&args.input)?)?;
    let (examples, stats) = mine(&journeys, &config);
    let mut out = open_output(&args.output)?;
    for e in &examples {
        write_json_line(&mut *out, e)?;
    }
    if ingest_stats.records > 0 {
        write_json_line(
            &mut *out,
            &serde_json::json!({ "record": "mining_summary", "ingest": ingest_stats, "stats": stats }),
        )?;
    }
    out.flush()?;
    eprintln!(
        "ingested {} records ({} malformed, {} no-op deltas) into {} journeys",
        ingest_stats.records, ingest_stats.malformed, ingest_stats.noop_deltas, ingest_stats.journeys
    );
    eprintln!("{stats}");
    Ok(())
}

fn run_curate(args: CurateArgs) -> Result<()> {
    let mut config: CurateConfig = read_toml(args.config.as_deref())?;
    config.batch_size = args.batch_size.unwrap_or(config.batch_size);
    config.no_edit_fraction = args.no_edit_fraction.unwrap_or(config.no_edit_fraction);
    config.seed = args.seed.unwrap_or(config.seed);
    config.policy.validate()?;
    let examples: Vec<PasteFixExample> = read_records(open_input(&args.input)?)?;
    let total = examples.len();
    let (kept, summary) = filter_all(examples, &config.policy, args.now_ms.unwrap_or_else(now_ms));

    let mut out = open_output(&args.output)?;
    for e in &kept {
        write_json_line(&mut *out, e)?;
    }

    let mut batch_summary = serde_json::Value::Null;
    if let Some(path) = &args.batches {
        if config.frequencies.is_empty() {
            bail!("batching needs language frequencies in the config file");
        }
        let weights = weight_languages(&kept, &config.frequencies)?;
        let mut batch_out = open_output(path)?;
        if !kept.is_empty() {
            let plan = build_batches(kept, config.batch_size, config.no_edit_fraction, &weights, config.seed)?;
            for (i, b) in plan.batches.iter().enumerate() {
                write_json_line(
                    &mut *batch_out,
                    &serde_json::json!({
                        "batch_index": i,
                        "size": b.size,
                        "no_edit": b.no_edit_count(),
                        "examples": b.examples,
                    }),
                )?;
            }
            batch_summary = serde_json::json!({
                "batches": plan.batches.len(),
                "shortfall": plan.shortfall,
                "unused": plan.unused,
            });
        }
        batch_out.flush()?;
    }

    if total > 0 {
        write_json_line(&mut *out, &curation_summary(&summary, &batch_summary))?;
    }
    out.flush()?;
    eprintln!("kept {} of {} examples", summary.kept, total);
    for (reason, n) in &summary.rejected {
        eprintln!("  rejected {reason:?}: {n}");
    }
    Ok(())
}

fn curation_summary(summary: &FilterSummary, batches: &serde_json::Value) -> serde_json::Value {
    let rejected: BTreeMap<String, usize> = summary.rejected.iter().map(|(k, v)| (format!("{k:?}"), *v)).collect();
    serde_json::json!({
        "record": "curation_summary",
        "kept": summary.kept,
        "rejected": rejected,
        "batching": batches,
    })
}

fn example_id(e: &PasteFixExample, index: usize) -> String {
    format!("{}#{}", e.journey_id, index)
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let records: Vec<EvalRecord> = if args.from_records {
        read_records(open_input(&args.input)?)?
    } else {
        let config: ServiceConfig = read_toml(args.config.as_deref())?;
        let engine = SuggestionEngine::new(config.engine.clone())?;
        let backend = match &args.script {
            Some(p) => Box::new(load_script(open_input(p)?)?),
            None => build_backend(&config.backend)?,
        };
        let examples: Vec<PasteFixExample> = read_records(open_input(&args.input)?)?;
        let mut records = Vec::with_capacity(examples.len());
        for (i, e) in examples.iter().enumerate() {
            let input = PasteInput {
                file_path: &e.file_path,
                language: &e.language,
                content_after_paste: &e.file_after_paste,
                region: e.region,
            };
            let suggestion = engine
                .suggest(input, &backend)
                .with_context(|| format!("example {}", example_id(e, i)))?;
            let predicted_nonempty = suggestion.is_some();
            let predicted_region = match suggestion {
                Some(s) => s.preview_region_lines,
                None => e.region_lines().into_iter().map(str::to_owned).collect(),
            };
            records.push(EvalRecord {
                example_id: example_id(e, i),
                language: e.language.clone(),
                predicted_region,
                ground_truth_region: e.fixed_lines().into_iter().map(str::to_owned).collect(),
                ground_truth_label: e.label,
                predicted_nonempty,
            });
        }
        records
    };
    if let Some(path) = &args.records {
        let mut out = open_output(path)?;
        for r in &records {
            write_json_line(&mut *out, r)?;
        }
        out.flush()?;
    }
    let report = offline_report(&records)?;
    let mut out = open_output(args.output.as_deref().unwrap_or(Path::new("-")))?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    eprint!("{report}");
    Ok(())
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let mut config: ServiceConfig = read_toml(args.config.as_deref())?;
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .try_init();
    let state = Arc::new(build_state(&config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.bind)
            .await
            .with_context(|| format!("binding {}", config.bind))?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        tokio::select! {
            r = serve(listener, Arc::clone(&state)) => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        anyhow::Ok(())
    })?;
    drop(runtime);
    state.telemetry.flush()?;
    Ok(())
}

fn run_replay(args: ReplayArgs) -> Result<()> {
    let events: Vec<SuggestionEvent> = read_records(open_input(&args.input)?)?;
    let report = online_report(&events)?;
    let mut out = open_output(args.output.as_deref().unwrap_or(Path::new("-")))?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn run_prompt(args: PromptArgs) -> Result<()> {
    let config: ServiceConfig = read_toml(args.config.as_deref())?;
    let examples: Vec<PasteFixExample> = read_records(open_input(&args.input)?)?;
    let mut out = open_output(&args.output)?;
    for (i, e) in examples.iter().enumerate() {
        let lines: Vec<&str> = e.file_after_paste.split('\n').collect();
        let selection = build_context(
            &lines,
            e.region,
            config.engine.token_budget,
            &crate::context::CharApproxTokenizer,
        )?;
        let prompt = crate::codec::encode_example(e, &selection, &config.engine.codec).ok();
        write_json_line(
            &mut *out,
            &serde_json::json!({
                "example_id": example_id(e, i),
                "fingerprint": prompt.as_deref().map(prompt_fingerprint),
                "prompt": prompt,
            }),
        )?;
    }
    out.flush()?;
    Ok(())
}
