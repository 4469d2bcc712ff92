//! Command-line entry point: subcommand dispatch over the dataset builder,
//! feed ingestion, training, classification, evaluation and the fixture
//! server. Exit codes: 0 success, 1 operational error, 2 usage error.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctphish_core::eval;
use ctphish_core::model::{train_forest, Meta, Mode, TrainOptions, TrainedModel};
use ctphish_core::rules::RuleSet;
use ctphish_core::features::FeatureSet;
use serde::Deserialize;

use crate::config::PipelineConfig;
use crate::ctlog::{Client, LogSource};
use crate::dataset::{
    assemble, build_benign, fetch_malicious_cert, filter_malicious, FilterLists, LabeledDataset,
};
use crate::fixture::{load_spec, FixtureServer};
use crate::intel::{IntelStore, Source, Verdict};
use crate::run::{classify_range, classify_stream, load_hooks, read_results, reverify, RunOptions};

#[derive(Parser)]
#[command(name = "ctphish", version, about = "Phishing detection over Certificate Transparency logs")]
pub struct Cli {
    /// TOML config file; built-in defaults apply when omitted
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Collect and filter CT certificates into a labeled dataset
    BuildDataset(BuildDatasetArgs),
    /// Pull phishing URL feeds into the local intel store
    IngestFeeds(IngestFeedsArgs),
    /// Train a forest model from a labeled dataset
    Train(TrainArgs),
    /// Classify certificates, live or over a time span
    Classify(ClassifyArgs),
    /// Operating points and ROC curves from a result file
    Evaluate(EvaluateArgs),
    /// Re-check positive results against the current intel snapshot
    Verify(VerifyArgs),
    /// Summarize a result file
    Report(ReportArgs),
    /// Serve a deterministic CT-shaped log for offline testing
    FixtureServer(FixtureServerArgs),
}

#[derive(Args)]
pub struct BuildDatasetArgs {
    /// Restrict to these configured logs (default: all)
    #[arg(long = "log", value_name = "NAME")]
    pub logs: Vec<String>,
    #[arg(long, value_name = "RFC3339")]
    pub from: String,
    #[arg(long, value_name = "RFC3339")]
    pub to: String,
    #[arg(long)]
    pub chunk_size: Option<u64>,
    #[arg(long)]
    pub gap: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// File of https URLs whose live certificates form the phishing class
    #[arg(long, value_name = "FILE")]
    pub phish_urls: Option<PathBuf>,
    /// Subsample the larger class down to the smaller
    #[arg(long)]
    pub balance: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub benign_services: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub popular_domains: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub malicious_domains: Option<PathBuf>,
}

#[derive(Args)]
pub struct IngestFeedsArgs {
    /// Feed source name (with --input); otherwise config feeds are used
    #[arg(long, requires = "input")]
    pub source: Option<Source>,
    /// URL or local path of the feed
    #[arg(long, requires = "source")]
    pub input: Option<String>,
    /// Fetch each feed once and exit instead of looping on the schedule
    #[arg(long)]
    pub once: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeaturesArg {
    All,
    Selected,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Domain,
    Cert,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetaArg {
    Min,
    Max,
    Avg,
    Med,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub features: FeaturesArg,
    #[arg(long, value_enum, default_value = "domain")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "max")]
    pub meta: MetaArg,
    #[arg(long, default_value_t = 200)]
    pub trees: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("span").required(true).args(["live", "from"]))]
pub struct ClassifyArgs {
    /// Follow configured logs and classify new entries as they appear
    #[arg(long, conflicts_with_all = ["from", "to"])]
    pub live: bool,
    #[arg(long, value_name = "RFC3339", requires = "to")]
    pub from: Option<String>,
    #[arg(long, value_name = "RFC3339", requires = "from")]
    pub to: Option<String>,
    /// Model file, or "rules:default" for the bundled rule scorer
    #[arg(long, value_name = "MODEL")]
    pub model: String,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub hooks: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long = "log", value_name = "NAME")]
    pub logs: Vec<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub chunk_size: Option<u64>,
    /// Stop live classification after this many results
    #[arg(long)]
    pub limit: Option<u64>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,
    /// Target false-positive rate; repeatable
    #[arg(long = "fpr", value_name = "RATE")]
    pub fprs: Vec<f64>,
    /// Write the report as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the ROC curve as CSV (single-classifier input only)
    #[arg(long, value_name = "FILE")]
    pub roc_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,
}

#[derive(Args)]
pub struct FixtureServerArgs {
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
}

pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    config.apply_env(std::env::vars())?;
    config.validate()?;
    Ok(config)
}

fn parse_time(s: &str) -> anyhow::Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .with_context(|| format!("timestamp {s:?} is not RFC 3339"))
}

fn pick_sources(config: &PipelineConfig, names: &[String]) -> anyhow::Result<Vec<LogSource>> {
    let all = config.sources();
    if names.is_empty() {
        if all.is_empty() {
            bail!("no logs configured; add [[logs]] to the config file");
        }
        return Ok(all);
    }
    names
        .iter()
        .map(|name| {
            all.iter()
                .find(|s| &s.name == name)
                .cloned()
                .ok_or_else(|| anyhow!("log {name:?} is not configured"))
        })
        .collect()
}

fn load_model(spec: &str) -> anyhow::Result<TrainedModel> {
    if spec == "rules:default" {
        return Ok(TrainedModel::from_rules(RuleSet::bundled().clone()));
    }
    TrainedModel::load(std::path::Path::new(spec)).with_context(|| format!("loading model {spec}"))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::BuildDataset(args) => cmd_build_dataset(config, args),
        Command::IngestFeeds(args) => cmd_ingest_feeds(config, args),
        Command::Train(args) => cmd_train(args),
        Command::Classify(args) => cmd_classify(config, args),
        Command::Evaluate(args) => cmd_evaluate(config, args),
        Command::Verify(args) => cmd_verify(config, args),
        Command::Report(args) => cmd_report(args),
        Command::FixtureServer(args) => cmd_fixture_server(args),
    }
}

fn cmd_build_dataset(config: PipelineConfig, args: BuildDatasetArgs) -> anyhow::Result<()> {
    config.ensure_store()?;
    let sources = pick_sources(&config, &args.logs)?;
    let span = (parse_time(&args.from)?, parse_time(&args.to)?);
    let chunk_size = args.chunk_size.unwrap_or(config.chunk_size);
    let gap = args.gap.unwrap_or(config.gap);
    let workers = args.workers.unwrap_or(config.workers);
    let filters = FilterLists::load(
        args.benign_services.as_deref().or(config.filters.benign_services.as_deref()),
        args.popular_domains.as_deref().or(config.filters.popular_domains.as_deref()),
        args.malicious_domains.as_deref().or(config.filters.malicious_domains.as_deref()),
    )?;
    let intel = IntelStore::open(&config.intel_path())?.snapshot(Utc::now());
    let client = Client::with_retry(config.retry.to_policy());

    let mut benign = Vec::new();
    for source in &sources {
        let plan = match client.plan_chunks(source, chunk_size, gap, span) {
            Ok(plan) => plan,
            Err(crate::ctlog::CtError::EmptySpan) => {
                eprintln!("{}: no entries in span", source.name);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let report = build_benign(&client, source, &plan, &filters, &intel, workers);
        for warning in &report.warnings {
            eprintln!("{}: {warning}", source.name);
        }
        println!(
            "{}: {} fetched, {} kept, {} undecodable, drops {:?}",
            source.name,
            report.input,
            report.records.len(),
            report.parse_skipped,
            report.drops
        );
        benign.extend(report.records);
    }

    let mut phish = Vec::new();
    if let Some(path) = &args.phish_urls {
        let raw = std::fs::read_to_string(path)?;
        let mut fetched = Vec::new();
        let mut failed = 0u64;
        for url in raw.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            match fetch_malicious_cert(url) {
                Ok(record) => fetched.push(record),
                Err(e) => {
                    failed += 1;
                    eprintln!("{url}: {e}");
                }
            }
        }
        let report = filter_malicious(fetched, &filters);
        println!(
            "phish: {} fetched, {} kept, {} unreachable, drops {:?}",
            report.input,
            report.records.len(),
            failed,
            report.drops
        );
        phish = report.records;
    }

    let dataset = assemble(benign, phish, args.balance, args.seed)?;
    dataset.save(&args.out)?;
    println!(
        "wrote {} ({} benign, {} phish)",
        args.out.display(),
        dataset.count(ctphish_core::model::Label::Benign),
        dataset.count(ctphish_core::model::Label::Phish)
    );
    Ok(())
}

fn fetch_feed(input: &str) -> anyhow::Result<Vec<u8>> {
    if input.starts_with("http://") || input.starts_with("https://") {
        let mut body = Vec::new();
        ureq::get(input)
            .call()
            .with_context(|| format!("fetching {input}"))?
            .body_mut()
            .as_reader()
            .read_to_end(&mut body)?;
        Ok(body)
    } else {
        Ok(std::fs::read(input)?)
    }
}

fn cmd_ingest_feeds(config: PipelineConfig, args: IngestFeedsArgs) -> anyhow::Result<()> {
    config.ensure_store()?;
    let mut store = IntelStore::open(&config.intel_path())?;
    let feeds: Vec<(Source, String, std::time::Duration)> = match (&args.source, &args.input) {
        (Some(source), Some(input)) => {
            vec![(*source, input.clone(), std::time::Duration::from_secs(3600))]
        }
        _ => {
            if config.feeds.is_empty() {
                bail!("no feeds configured; pass --source/--input or add [[feeds]]");
            }
            config.feeds.iter().map(|f| (f.source, f.input.clone(), f.interval())).collect()
        }
    };

    loop {
        let mut next_due = std::time::Duration::MAX;
        for (source, input, interval) in &feeds {
            match fetch_feed(input) {
                Ok(raw) => {
                    let report = store.ingest_feed(*source, &raw, Utc::now())?;
                    println!(
                        "{source}: {} added, {} already known, {} skipped",
                        report.added.len(),
                        report.duplicates,
                        report.skipped
                    );
                }
                Err(e) if args.once => return Err(e),
                Err(e) => eprintln!("{source}: {e:#}"),
            }
            next_due = next_due.min(*interval);
        }
        if args.once {
            return Ok(());
        }
        std::thread::sleep(next_due);
    }
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let dataset = LabeledDataset::load(&args.dataset)?;
    let pairs = dataset.training_pairs();
    let opts = TrainOptions {
        feature_set: match args.features {
            FeaturesArg::All => FeatureSet::All,
            FeaturesArg::Selected => FeatureSet::Selected,
        },
        mode: match args.mode {
            ModeArg::Domain => Mode::PerDomain,
            ModeArg::Cert => Mode::Cert,
        },
        meta: match args.meta {
            MetaArg::Min => Meta::Min,
            MetaArg::Max => Meta::Max,
            MetaArg::Avg => Meta::Avg,
            MetaArg::Med => Meta::Med,
        },
        n_trees: args.trees,
        seed: args.seed,
        trained_at: dataset.created_at,
    };
    let model = train_forest(&pairs, &opts)?;
    model.save(&args.out)?;
    let manifest = model.train_manifest.as_ref().expect("trained model has manifest");
    println!("{}", serde_json::to_string_pretty(manifest)?);
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_classify(config: PipelineConfig, args: ClassifyArgs) -> anyhow::Result<()> {
    config.ensure_store()?;
    let sources = pick_sources(&config, &args.logs)?;
    let model = Arc::new(load_model(&args.model)?);
    let hooks = match &args.hooks {
        Some(path) => load_hooks(path)?,
        None => Vec::new(),
    };
    let opts = RunOptions {
        threshold: args.threshold.unwrap_or(config.threshold),
        workers: args.workers.unwrap_or(config.workers),
        hooks,
        limit: args.limit,
    };
    let out = args.out.unwrap_or_else(|| config.results_path());
    let client = Client::with_retry(config.retry.to_policy());

    let summary = if args.live {
        classify_stream(
            Arc::new(client),
            &sources,
            model,
            &opts,
            config.poll_interval(),
            &config.cursor_dir(),
            &out,
            Arc::new(AtomicBool::new(false)),
        )?
    } else {
        let span = (
            parse_time(args.from.as_deref().expect("clap group guarantees from"))?,
            parse_time(args.to.as_deref().expect("clap requires to with from"))?,
        );
        let chunk_size = args.chunk_size.unwrap_or(config.chunk_size);
        classify_range(&client, &sources, span, model, &opts, chunk_size, &out)?
    };
    print!("{}", summary.render());
    println!("results: {}", out.display());
    Ok(())
}

#[derive(Deserialize)]
struct EvalRow {
    #[serde(default = "default_classifier")]
    classifier: String,
    score: f64,
    #[serde(default = "default_label")]
    label: eval::Label,
    #[serde(default)]
    domains: Vec<String>,
    #[serde(default)]
    verification: Vec<crate::run::VerificationEvent>,
}

impl EvalRow {
    /// Explicit labels win; otherwise a confirmed verification history makes
    /// the row known phish, the durable record outliving feed churn.
    fn effective_label(&self) -> eval::Label {
        match self.label {
            eval::Label::Unknown
                if self.verification.last().map(|v| v.verdict)
                    == Some(Verdict::ConfirmedPhish) =>
            {
                eval::Label::Phish
            }
            l => l,
        }
    }
}

fn default_classifier() -> String {
    "results".into()
}

fn default_label() -> eval::Label {
    eval::Label::Unknown
}

fn cmd_evaluate(config: PipelineConfig, args: EvaluateArgs) -> anyhow::Result<()> {
    let raw = std::fs::read_to_string(&args.results)?;
    let mut groups: BTreeMap<String, (Vec<(f64, eval::Label)>, Vec<Vec<String>>)> = BTreeMap::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EvalRow = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", args.results.display(), i + 1))?;
        let label = row.effective_label();
        let group = groups.entry(row.classifier).or_default();
        group.0.push((row.score, label));
        group.1.push(row.domains);
    }
    if groups.is_empty() {
        bail!("{} holds no scored rows", args.results.display());
    }

    let targets = if args.fprs.is_empty() { vec![1e-3] } else { args.fprs.clone() };
    let snapshot = IntelStore::open(&config.intel_path())?.snapshot(Utc::now());
    let sets: Vec<(String, eval::ScoredSet)> = groups
        .iter()
        .map(|(name, (items, _))| (name.clone(), eval::ScoredSet::new(items.clone())))
        .collect();
    let report = eval::report(&sets, &targets, |classifier, idx| {
        let domains = &groups[classifier].1[idx];
        !domains.is_empty() && snapshot.verify_hosts(domains) == Verdict::ConfirmedPhish
    })?;
    print!("{}", report.render_table());

    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        println!("report: {}", path.display());
    }
    if let Some(path) = &args.roc_out {
        if sets.len() != 1 {
            bail!("--roc-out needs a single-classifier result file, found {}", sets.len());
        }
        let points = eval::roc(&sets[0].1)?;
        let f = std::fs::File::create(path)?;
        eval::write_roc_csv(std::io::BufWriter::new(f), &points)?;
        println!("roc: {}", path.display());
    }
    Ok(())
}

fn cmd_verify(config: PipelineConfig, args: VerifyArgs) -> anyhow::Result<()> {
    let snapshot = IntelStore::open(&config.intel_path())?.snapshot(Utc::now());
    let summary = reverify(&args.results, &snapshot)?;
    println!(
        "{} confirmed, {} without evidence, {} negatives skipped",
        summary.confirmed, summary.no_evidence, summary.skipped_negative
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let results = read_results(&args.results)?;
    let mut by_classifier: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut confirmed = 0u64;
    let mut no_evidence = 0u64;
    let mut unverified = 0u64;
    for result in &results {
        let slot = by_classifier.entry(result.classifier.as_str()).or_default();
        slot.0 += 1;
        if result.predicted == ctphish_core::model::Label::Phish {
            slot.1 += 1;
            match result.last_verdict() {
                Some(Verdict::ConfirmedPhish) => confirmed += 1,
                Some(Verdict::NoEvidence) => no_evidence += 1,
                None => unverified += 1,
            }
        }
    }
    println!("{} results", results.len());
    for (classifier, (total, positive)) in &by_classifier {
        println!("  {classifier}: {total} scored, {positive} positive");
    }
    println!("positives: {confirmed} confirmed, {no_evidence} without evidence, {unverified} unverified");
    Ok(())
}

fn cmd_fixture_server(args: FixtureServerArgs) -> anyhow::Result<()> {
    let (log, growth) = load_spec(&args.spec)?;
    let total = log.len();
    let server = FixtureServer::start(log)?;
    println!("{}", server.base_url());
    // consumers read the address from a pipe, so force it out now
    std::io::Write::flush(&mut std::io::stdout())?;
    if let Some(growth) = growth {
        let log = Arc::clone(server.log());
        std::thread::spawn(move || loop {
            std::thread::sleep(std::time::Duration::from_secs(growth.interval_secs));
            log.advance(growth.step);
        });
    }
    eprintln!("serving {total} entries; press ctrl-c to stop");
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
