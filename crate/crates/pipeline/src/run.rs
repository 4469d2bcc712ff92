//! End-to-end orchestration: live classification over followed logs,
//! retrospective classification over spans, the append-only result store,
//! post-processing hooks, and re-verification against newer feed snapshots.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use ctphish_core::cert::{hex32, ts_rfc3339, CertificateRecord};
use ctphish_core::model::{Label, TrainedModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctlog::{follow, Client, Cursor, CtError, FollowEvent, LogSource};
use crate::intel::{Snapshot, Verdict};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Ct(#[from] CtError),
    #[error(transparent)]
    Model(#[from] ctphish_core::model::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("results line {line}: {err}")]
    Corrupt { line: usize, err: String },
    #[error("invalid result: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub verdict: Verdict,
    #[serde(with = "ts_rfc3339")]
    pub verified_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    #[serde(with = "hex32")]
    pub fingerprint: [u8; 32],
    pub domains: Vec<String>,
    pub score: f64,
    pub threshold: f64,
    pub predicted: Label,
    pub classifier: String,
    #[serde(with = "ts_rfc3339")]
    pub classified_at: DateTime<Utc>,
    #[serde(default)]
    pub verification: Vec<VerificationEvent>,
}

impl ClassificationResult {
    pub fn validate(&self) -> Result<(), String> {
        let expect = if self.score >= self.threshold { Label::Phish } else { Label::Benign };
        if self.predicted != expect {
            return Err(format!(
                "predicted {:?} contradicts score {} vs threshold {}",
                self.predicted, self.score, self.threshold
            ));
        }
        for pair in self.verification.windows(2) {
            if pair[1].verified_at < pair[0].verified_at {
                return Err("verification history timestamps decrease".into());
            }
        }
        Ok(())
    }

    pub fn last_verdict(&self) -> Option<Verdict> {
        self.verification.last().map(|e| e.verdict)
    }

    /// Appends a verification event. History stays nondecreasing in time and
    /// a confirmed verdict never downgrades.
    pub fn push_verification(&mut self, verdict: Verdict, at: DateTime<Utc>) {
        let verdict = if self.last_verdict() == Some(Verdict::ConfirmedPhish) {
            Verdict::ConfirmedPhish
        } else {
            verdict
        };
        let at = match self.verification.last() {
            Some(last) => at.max(last.verified_at),
            None => at,
        };
        self.verification.push(VerificationEvent { verdict, verified_at: at });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    OnPositive,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HookSpec {
    pub trigger: Trigger,
    /// Shell command; `{fingerprint}`, `{domains}` and `{score}` are
    /// substituted before execution.
    pub command: String,
    #[serde(default = "default_hook_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_hook_timeout() -> u64 {
    5000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HooksFile {
    #[serde(default)]
    hooks: Vec<HookSpec>,
}

pub fn load_hooks(path: &Path) -> Result<Vec<HookSpec>, RunError> {
    let raw = std::fs::read_to_string(path)?;
    let parsed: HooksFile =
        toml::from_str(&raw).map_err(|e| RunError::Invalid(format!("hooks file: {e}")))?;
    Ok(parsed.hooks)
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct RunSummary {
    pub fetched: u64,
    pub parse_skipped: u64,
    pub duplicates: u64,
    pub scored: u64,
    pub positives: u64,
    pub unreachable: u64,
    pub per_log: BTreeMap<String, u64>,
    pub hooks_ok: u64,
    pub hooks_timed_out: u64,
    pub hooks_failed: u64,
}

impl RunSummary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "fetched {} entries ({} undecodable, {} duplicate), scored {}, {} positive\n",
            self.fetched, self.parse_skipped, self.duplicates, self.scored, self.positives
        );
        for (log, n) in &self.per_log {
            out.push_str(&format!("  {log}: {n} scored\n"));
        }
        if self.hooks_ok + self.hooks_timed_out + self.hooks_failed > 0 {
            out.push_str(&format!(
                "hooks: {} ok, {} timed out, {} failed\n",
                self.hooks_ok, self.hooks_timed_out, self.hooks_failed
            ));
        }
        if self.unreachable > 0 {
            out.push_str(&format!("log outages seen: {}\n", self.unreachable));
        }
        out
    }
}

pub struct RunOptions {
    pub threshold: f64,
    pub workers: usize,
    pub hooks: Vec<HookSpec>,
    /// Stop after this many results; live mode runs unbounded without it.
    pub limit: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> RunOptions {
        RunOptions { threshold: 0.5, workers: 4, hooks: Vec::new(), limit: None }
    }
}

struct ScoreJob {
    log: String,
    seq: u64,
    record: CertificateRecord,
}

/// Shared scoring stage: a worker pool drains jobs, scores each record once
/// and forwards results for ordered emission.
fn spawn_scorers(
    model: Arc<TrainedModel>,
    threshold: f64,
    workers: usize,
    rx: mpsc::Receiver<ScoreJob>,
    tx: mpsc::SyncSender<(String, u64, ClassificationResult)>,
    scored: Arc<AtomicU64>,
) -> Vec<std::thread::JoinHandle<()>> {
    let rx = Arc::new(Mutex::new(rx));
    let classifier = model.id();
    (0..workers.max(1))
        .map(|_| {
            let rx = Arc::clone(&rx);
            let tx = tx.clone();
            let model = Arc::clone(&model);
            let scored = Arc::clone(&scored);
            let classifier = classifier.clone();
            std::thread::spawn(move || loop {
                let job = match rx.lock().unwrap().recv() {
                    Ok(job) => job,
                    Err(_) => return,
                };
                let score = match model.score_record(&job.record) {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("scoring {}: {e}", hex::encode(job.record.fingerprint));
                        continue;
                    }
                };
                scored.fetch_add(1, Ordering::SeqCst);
                let result = ClassificationResult {
                    fingerprint: job.record.fingerprint,
                    domains: job.record.domains(),
                    score,
                    threshold,
                    predicted: if score >= threshold { Label::Phish } else { Label::Benign },
                    classifier: classifier.clone(),
                    classified_at: job.record.seen_at,
                    verification: Vec::new(),
                };
                if tx.send((job.log, job.seq, result)).is_err() {
                    return;
                }
            })
        })
        .collect()
}

/// Ordered emission: per-log reorder buffers keyed by sequence number, a
/// JSONL appender, and out-of-band hook dispatch.
struct Emitter {
    out: std::io::BufWriter<std::fs::File>,
    pending: BTreeMap<String, BTreeMap<u64, ClassificationResult>>,
    next_seq: BTreeMap<String, u64>,
    hook_tx: Option<mpsc::SyncSender<ClassificationResult>>,
    summary: RunSummary,
}

impl Emitter {
    fn new(path: &Path, hook_tx: Option<mpsc::SyncSender<ClassificationResult>>) -> Result<Emitter, RunError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Emitter {
            out: std::io::BufWriter::new(std::fs::File::create(path)?),
            pending: BTreeMap::new(),
            next_seq: BTreeMap::new(),
            hook_tx,
            summary: RunSummary::default(),
        })
    }

    fn push(&mut self, log: String, seq: u64, result: ClassificationResult) -> Result<u64, RunError> {
        self.pending.entry(log.clone()).or_default().insert(seq, result);
        let mut emitted = 0;
        let next = self.next_seq.entry(log.clone()).or_insert(0);
        let buffer = self.pending.get_mut(&log).unwrap();
        while let Some(result) = buffer.remove(next) {
            *next += 1;
            emitted += 1;
            writeln!(
                self.out,
                "{}",
                serde_json::to_string(&result).expect("result serializes")
            )?;
            *self.summary.per_log.entry(log.clone()).or_insert(0) += 1;
            if result.predicted == Label::Phish {
                self.summary.positives += 1;
                if let Some(tx) = &self.hook_tx {
                    if tx.try_send(result).is_err() {
                        self.summary.hooks_failed += 1;
                    }
                }
            }
        }
        Ok(emitted)
    }

    fn finish(mut self) -> Result<RunSummary, RunError> {
        for (log, buffer) in &self.pending {
            if !buffer.is_empty() {
                return Err(RunError::Invalid(format!(
                    "{log}: {} results never emitted (missing sequence numbers)",
                    buffer.len()
                )));
            }
        }
        self.out.flush()?;
        Ok(self.summary)
    }
}

/// Runs hook commands sequentially with a per-hook deadline; the stream
/// never waits on them.
fn spawn_hook_runner(
    hooks: Vec<HookSpec>,
    counters: Arc<(AtomicU64, AtomicU64, AtomicU64)>,
) -> (mpsc::SyncSender<ClassificationResult>, std::thread::JoinHandle<()>) {
    let (tx, rx) = mpsc::sync_channel::<ClassificationResult>(1024);
    let handle = std::thread::spawn(move || {
        for result in rx {
            for hook in hooks.iter().filter(|h| h.enabled) {
                match run_hook(hook, &result) {
                    HookOutcome::Ok => counters.0.fetch_add(1, Ordering::SeqCst),
                    HookOutcome::TimedOut => counters.1.fetch_add(1, Ordering::SeqCst),
                    HookOutcome::Failed => counters.2.fetch_add(1, Ordering::SeqCst),
                };
            }
        }
    });
    (tx, handle)
}

enum HookOutcome {
    Ok,
    TimedOut,
    Failed,
}

fn run_hook(hook: &HookSpec, result: &ClassificationResult) -> HookOutcome {
    let command = hook
        .command
        .replace("{fingerprint}", &hex::encode(result.fingerprint))
        .replace("{domains}", &result.domains.join(","))
        .replace("{score}", &format!("{}", result.score));
    let child = std::process::Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(std::process::Stdio::null())
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => {
            log::warn!("hook spawn failed: {e}");
            return HookOutcome::Failed;
        }
    };
    let deadline = std::time::Instant::now() + Duration::from_millis(hook.timeout_ms);
    loop {
        match child.try_wait() {
            Ok(Some(status)) if status.success() => return HookOutcome::Ok,
            Ok(Some(_)) => return HookOutcome::Failed,
            Ok(None) => {
                if std::time::Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    log::warn!("hook timed out: {}", hook.command);
                    return HookOutcome::TimedOut;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                log::warn!("hook wait failed: {e}");
                return HookOutcome::Failed;
            }
        }
    }
}

/// Retrospective classification of a time span: plan with gap 0, download,
/// dedup, score, emit in index order. Deterministic for fixed inputs.
pub fn classify_range(
    client: &Client,
    sources: &[LogSource],
    span: (DateTime<Utc>, DateTime<Utc>),
    model: Arc<TrainedModel>,
    opts: &RunOptions,
    chunk_size: u64,
    out: &Path,
) -> Result<RunSummary, RunError> {
    model.validate()?;
    let mut emitter = Emitter::new(out, None)?;
    let scored = Arc::new(AtomicU64::new(0));
    let mut fetched = 0u64;
    let mut parse_skipped = 0u64;
    let mut duplicates = 0u64;
    let mut seen: HashSet<[u8; 32]> = HashSet::new();

    for source in sources {
        let plan = match client.plan_chunks(source, chunk_size, 0, span) {
            Ok(plan) => plan,
            Err(CtError::EmptySpan) => continue,
            Err(e) => return Err(e.into()),
        };
        let (job_tx, job_rx) = mpsc::sync_channel::<ScoreJob>(1024);
        let (res_tx, res_rx) = mpsc::sync_channel(1024);
        let workers = spawn_scorers(
            Arc::clone(&model),
            opts.threshold,
            opts.workers,
            job_rx,
            res_tx,
            Arc::clone(&scored),
        );
        let mut seq = 0u64;
        for result in client.download_plan(source, &plan, opts.workers) {
            let chunk = result?;
            fetched += chunk.entries.len() as u64 + chunk.skipped;
            parse_skipped += chunk.skipped;
            for entry in chunk.entries {
                let record = match entry.to_record(&source.name) {
                    Ok(r) => r,
                    Err(_) => {
                        parse_skipped += 1;
                        continue;
                    }
                };
                if !seen.insert(record.fingerprint) {
                    duplicates += 1;
                    continue;
                }
                let job = ScoreJob { log: source.name.clone(), seq, record };
                seq += 1;
                job_tx.send(job).map_err(|_| RunError::Invalid("scorer pool died".into()))?;
                // drain without blocking so bounded queues cannot deadlock
                while let Ok((log, s, result)) = res_rx.try_recv() {
                    emitter.push(log, s, result)?;
                }
            }
        }
        drop(job_tx);
        // workers exit once the job queue drains, closing the result channel;
        // any sequence gap left behind surfaces in finish()
        while let Ok((log, s, result)) = res_rx.recv() {
            emitter.push(log, s, result)?;
        }
        for w in workers {
            let _ = w.join();
        }
    }

    let mut summary = emitter.finish()?;
    summary.fetched = fetched;
    summary.parse_skipped = parse_skipped;
    summary.duplicates = duplicates;
    summary.scored = scored.load(Ordering::SeqCst);
    Ok(summary)
}

/// Live classification: follow every source from its cursor, classify each
/// new entry once, dispatch positives to hooks. Runs until `stop` is set or
/// `opts.limit` results have been emitted.
pub fn classify_stream(
    client: Arc<Client>,
    sources: &[LogSource],
    model: Arc<TrainedModel>,
    opts: &RunOptions,
    poll_interval: Duration,
    cursor_dir: &Path,
    out: &Path,
    stop: Arc<AtomicBool>,
) -> Result<RunSummary, RunError> {
    model.validate()?;
    std::fs::create_dir_all(cursor_dir)?;

    let hook_counters = Arc::new((AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)));
    let (hook_tx, hook_handle) = if opts.hooks.is_empty() {
        (None, None)
    } else {
        let (tx, handle) = spawn_hook_runner(opts.hooks.clone(), Arc::clone(&hook_counters));
        (Some(tx), Some(handle))
    };
    let mut emitter = Emitter::new(out, hook_tx)?;

    let (event_tx, event_rx) = mpsc::sync_channel::<(String, FollowEvent)>(1024);
    let mut forwarders = Vec::new();
    for source in sources {
        let cursor = Cursor::new(cursor_dir.join(format!("{}.cursor", source.name)));
        let rx = follow(
            Arc::clone(&client),
            source.clone(),
            poll_interval,
            cursor,
            Arc::clone(&stop),
        );
        let tx = event_tx.clone();
        let name = source.name.clone();
        forwarders.push(std::thread::spawn(move || {
            for event in rx {
                if tx.send((name.clone(), event)).is_err() {
                    return;
                }
            }
        }));
    }
    drop(event_tx);

    let (job_tx, job_rx) = mpsc::sync_channel::<ScoreJob>(1024);
    let (res_tx, res_rx) = mpsc::sync_channel(1024);
    let scored = Arc::new(AtomicU64::new(0));
    let workers = spawn_scorers(
        Arc::clone(&model),
        opts.threshold,
        opts.workers,
        job_rx,
        res_tx,
        Arc::clone(&scored),
    );

    let mut fetched = 0u64;
    let mut parse_skipped = 0u64;
    let mut duplicates = 0u64;
    let mut unreachable = 0u64;
    let mut seen: HashSet<[u8; 32]> = HashSet::new();
    let mut seqs: BTreeMap<String, u64> = BTreeMap::new();
    let mut submitted = 0u64;
    let mut emitted = 0u64;

    'ingest: for (log, event) in event_rx {
        match event {
            FollowEvent::Entry(entry) => {
                fetched += 1;
                let record = match entry.to_record(&log) {
                    Ok(r) => r,
                    Err(_) => {
                        parse_skipped += 1;
                        continue;
                    }
                };
                if !seen.insert(record.fingerprint) {
                    duplicates += 1;
                    continue;
                }
                let seq = seqs.entry(log.clone()).or_insert(0);
                let job = ScoreJob { log: log.clone(), seq: *seq, record };
                *seq += 1;
                submitted += 1;
                job_tx.send(job).map_err(|_| RunError::Invalid("scorer pool died".into()))?;
                while let Ok((l, s, r)) = res_rx.try_recv() {
                    emitted += emitter.push(l, s, r)?;
                }
                if let Some(limit) = opts.limit {
                    if submitted >= limit {
                        stop.store(true, Ordering::SeqCst);
                        break 'ingest;
                    }
                }
            }
            FollowEvent::Skipped(n) => {
                fetched += n;
                parse_skipped += n;
            }
            FollowEvent::Unreachable(reason) => {
                unreachable += 1;
                log::warn!("{log}: {reason}");
            }
        }
        if stop.load(Ordering::SeqCst) {
            break;
        }
    }
    stop.store(true, Ordering::SeqCst);
    drop(job_tx);
    while emitted < submitted {
        let (l, s, r) = res_rx
            .recv()
            .map_err(|_| RunError::Invalid("scorer pool died before draining".into()))?;
        emitted += emitter.push(l, s, r)?;
    }
    for w in workers {
        let _ = w.join();
    }
    for f in forwarders {
        let _ = f.join();
    }

    let mut summary = emitter.finish()?;
    if let Some(handle) = hook_handle {
        // emitter is gone, so the hook channel is closed; wait for the tail
        let _ = handle.join();
    }
    summary.fetched = fetched;
    summary.parse_skipped = parse_skipped;
    summary.duplicates = duplicates;
    summary.scored = scored.load(Ordering::SeqCst);
    summary.unreachable = unreachable;
    summary.hooks_ok = hook_counters.0.load(Ordering::SeqCst);
    summary.hooks_timed_out = hook_counters.1.load(Ordering::SeqCst);
    summary.hooks_failed = hook_counters.2.load(Ordering::SeqCst);
    Ok(summary)
}

pub fn read_results(path: &Path) -> Result<Vec<ClassificationResult>, RunError> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result: ClassificationResult = serde_json::from_str(&line)
            .map_err(|e| RunError::Corrupt { line: i + 1, err: e.to_string() })?;
        result.validate().map_err(RunError::Invalid)?;
        out.push(result);
    }
    Ok(out)
}

pub fn write_results(path: &Path, results: &[ClassificationResult]) -> Result<(), RunError> {
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        for result in results {
            writeln!(f, "{}", serde_json::to_string(result).expect("result serializes"))?;
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct ReverifySummary {
    pub confirmed: u64,
    pub no_evidence: u64,
    pub skipped_negative: u64,
}

/// Recomputes verdicts for positive results against a newer intel snapshot.
/// History is append-only and confirmations are never withdrawn.
pub fn reverify(results_path: &Path, snapshot: &Snapshot) -> Result<ReverifySummary, RunError> {
    let mut results = read_results(results_path)?;
    let mut summary = ReverifySummary::default();
    for result in &mut results {
        if result.predicted == Label::Benign {
            summary.skipped_negative += 1;
            continue;
        }
        let verdict = snapshot.verify_hosts(&result.domains);
        result.push_verification(verdict, snapshot.taken_at);
        match result.last_verdict().expect("just pushed") {
            Verdict::ConfirmedPhish => summary.confirmed += 1,
            Verdict::NoEvidence => summary.no_evidence += 1,
        }
    }
    write_results(results_path, &results)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn result(score: f64, threshold: f64) -> ClassificationResult {
        ClassificationResult {
            fingerprint: [7; 32],
            domains: vec!["paypal-secured.ga".into()],
            score,
            threshold,
            predicted: if score >= threshold { Label::Phish } else { Label::Benign },
            classifier: "rules-test".into(),
            classified_at: Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap(),
            verification: Vec::new(),
        }
    }

    #[test]
    fn validate_enforces_threshold_rule() {
        let mut r = result(0.9, 0.5);
        assert!(r.validate().is_ok());
        r.predicted = Label::Benign;
        assert!(r.validate().is_err());
        // equality counts as positive
        let r = result(0.5, 0.5);
        assert_eq!(r.predicted, Label::Phish);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn verification_history_is_monotone() {
        let mut r = result(0.9, 0.5);
        let t0 = Utc.with_ymd_and_hms(2020, 5, 2, 0, 0, 0).unwrap();
        let t1 = Utc.with_ymd_and_hms(2020, 5, 3, 0, 0, 0).unwrap();
        r.push_verification(Verdict::NoEvidence, t0);
        r.push_verification(Verdict::ConfirmedPhish, t1);
        // later no-evidence cannot undo a confirmation
        r.push_verification(Verdict::NoEvidence, t1);
        assert_eq!(r.last_verdict(), Some(Verdict::ConfirmedPhish));
        // an earlier timestamp is clamped, never reordered
        r.push_verification(Verdict::ConfirmedPhish, t0);
        assert!(r.validate().is_ok());
        assert_eq!(r.verification.len(), 4);
    }

    #[test]
    fn results_roundtrip_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let mut a = result(0.9, 0.5);
        a.push_verification(Verdict::NoEvidence, a.classified_at);
        let b = result(0.2, 0.5);
        write_results(&path, &[a.clone(), b.clone()]).unwrap();
        let loaded = read_results(&path).unwrap();
        assert_eq!(loaded, vec![a, b]);
    }

    #[test]
    fn hook_substitutes_and_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let marker = dir.path().join("hit");
        let hook = HookSpec {
            trigger: Trigger::OnPositive,
            command: format!("echo {{domains}} > {}", marker.display()),
            timeout_ms: 2000,
            enabled: true,
        };
        let r = result(0.9, 0.5);
        assert!(matches!(run_hook(&hook, &r), HookOutcome::Ok));
        let content = std::fs::read_to_string(&marker).unwrap();
        assert_eq!(content.trim(), "paypal-secured.ga");

        let slow = HookSpec {
            trigger: Trigger::OnPositive,
            command: "sleep 5".into(),
            timeout_ms: 50,
            enabled: true,
        };
        let started = std::time::Instant::now();
        assert!(matches!(run_hook(&slow, &r), HookOutcome::TimedOut));
        assert!(started.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn hooks_toml_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hooks.toml");
        std::fs::write(
            &path,
            "[[hooks]]\ntrigger = \"on_positive\"\ncommand = \"echo {fingerprint}\"\n",
        )
        .unwrap();
        let hooks = load_hooks(&path).unwrap();
        assert_eq!(hooks.len(), 1);
        assert_eq!(hooks[0].timeout_ms, 5000);
        assert!(hooks[0].enabled);
    }
}
