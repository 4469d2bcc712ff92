//! CT v1 wire client: signed tree heads, entry ranges with truncation
//! handling, chunk planning over a time span, and live log following.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::{DateTime, TimeZone, Utc};
use ctphish_core::cert::{CertError, CertificateRecord, CtLogIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CtError {
    #[error("log unreachable after {attempts} attempts: {last}")]
    LogUnreachable { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("range [{start},{end}) rejected by server: {reason}")]
    RangeRejected { start: u64, end: u64, reason: String },
    #[error("no entries in span")]
    EmptySpan,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSource {
    pub name: String,
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope_year: Option<i32>,
}

impl LogSource {
    pub fn new(name: &str, base_url: &str) -> LogSource {
        LogSource { name: name.into(), base_url: base_url.into(), scope_year: None }
    }

    /// Production logs are HTTPS; plain HTTP is accepted for local fixtures.
    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("log source name is empty".into());
        }
        if !(self.base_url.starts_with("https://") || self.base_url.starts_with("http://")) {
            return Err(format!("base_url {} is not an absolute HTTP(S) URL", self.base_url));
        }
        Ok(())
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/ct/v1/{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    X509,
    Precert,
}

/// One decoded log entry. For precerts `cert_der` holds the TBS bytes the
/// leaf carries, not a full certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub index: u64,
    pub timestamp: DateTime<Utc>,
    pub kind: EntryKind,
    pub leaf_input: Vec<u8>,
    pub cert_der: Vec<u8>,
    pub issuer_key_hash: Option<[u8; 32]>,
}

impl LogEntry {
    /// Certificate record with `seen_at` pinned to the leaf timestamp, so
    /// replays of the same range are reproducible.
    pub fn to_record(&self, log: &str) -> Result<CertificateRecord, CertError> {
        let mut record = match self.kind {
            EntryKind::X509 => ctphish_core::cert::parse_der(&self.cert_der)?,
            EntryKind::Precert => ctphish_core::cert::parse_tbs(&self.cert_der)?,
        };
        record.seen_at = self.timestamp;
        record.ct_log_index = Some(CtLogIndex { log: log.into(), index: self.index });
        Ok(record)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub entries: Vec<LogEntry>,
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunks: Vec<(u64, u64)>,
    pub chunk_size: u64,
    pub gap: u64,
    pub span: (DateTime<Utc>, DateTime<Utc>),
}

impl ChunkPlan {
    pub fn total_entries(&self) -> u64 {
        self.chunks.iter().map(|(s, e)| e - s).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: u32,
    pub cap: Duration,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2,
            cap: Duration::from_secs(60),
            max_attempts: 8,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let mut d = self.base;
        for _ in 0..attempt {
            d = (d * self.factor).min(self.cap);
            if d == self.cap {
                break;
            }
        }
        d.min(self.cap)
    }
}

pub struct Client {
    agent: ureq::Agent,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct SthBody {
    tree_size: u64,
    timestamp: u64,
}

#[derive(Deserialize)]
struct EntriesBody {
    entries: Vec<RawEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    leaf_input: String,
    #[allow(dead_code)]
    #[serde(default)]
    extra_data: String,
}

impl Default for Client {
    fn default() -> Client {
        Client::new()
    }
}

impl Client {
    pub fn new() -> Client {
        Client::with_retry(RetryPolicy::default())
    }

    pub fn with_retry(retry: RetryPolicy) -> Client {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        Client { agent: ureq::Agent::new_with_config(config), retry }
    }

    /// GET with exponential backoff on transport errors, 429 and 5xx.
    fn get_json<T: serde::de::DeserializeOwned>(&self, url: &str) -> Result<T, CtError> {
        let mut last = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.agent.get(url).call() {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .read_json::<T>()
                        .map_err(|e| CtError::MalformedResponse(e.to_string()));
                }
                Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                    last = format!("HTTP {code}");
                }
                Err(ureq::Error::StatusCode(code)) => {
                    return Err(CtError::MalformedResponse(format!("HTTP {code} from {url}")));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(CtError::LogUnreachable { attempts: self.retry.max_attempts, last })
    }

    pub fn get_sth(&self, source: &LogSource) -> Result<(u64, DateTime<Utc>), CtError> {
        let body: serde_json::Value = self.get_json(&source.endpoint("get-sth"))?;
        let sth: SthBody = serde_json::from_value(body)
            .map_err(|e| CtError::MalformedResponse(e.to_string()))?;
        let ts = Utc
            .timestamp_millis_opt(sth.timestamp as i64)
            .single()
            .ok_or_else(|| CtError::MalformedResponse("timestamp out of range".into()))?;
        Ok((sth.tree_size, ts))
    }

    /// Fetches the half-open index range [start, end), re-requesting when
    /// the server truncates. Undecodable leaves are skipped and counted.
    pub fn get_entries(&self, source: &LogSource, start: u64, end: u64) -> Result<Fetched, CtError> {
        assert!(start <= end, "inverted range");
        let mut out = Fetched::default();
        let mut next = start;
        while next < end {
            let url = format!(
                "{}?start={}&end={}",
                source.endpoint("get-entries"),
                next,
                end - 1
            );
            let body: EntriesBody = match self.get_json(&url) {
                Ok(b) => b,
                Err(CtError::MalformedResponse(m)) if m.starts_with("HTTP 4") => {
                    return Err(CtError::RangeRejected { start, end, reason: m });
                }
                Err(e) => return Err(e),
            };
            if body.entries.is_empty() {
                return Err(CtError::MalformedResponse(format!(
                    "empty entries array for [{next},{end})"
                )));
            }
            for (offset, raw) in body.entries.iter().enumerate() {
                let index = next + offset as u64;
                if index >= end {
                    break; // server over-delivered; ignore the excess
                }
                match decode_raw(index, raw) {
                    Ok(entry) => out.entries.push(entry),
                    Err(e) => {
                        log::debug!("{}: leaf {index} skipped: {e}", source.name);
                        out.skipped += 1;
                    }
                }
            }
            next += body.entries.len() as u64;
        }
        Ok(out)
    }

    /// Covers the indices whose leaf timestamps fall in `span` (half-open),
    /// located by binary search, then tiles them with `chunk_size` and `gap`.
    pub fn plan_chunks(
        &self,
        source: &LogSource,
        chunk_size: u64,
        gap: u64,
        span: (DateTime<Utc>, DateTime<Utc>),
    ) -> Result<ChunkPlan, CtError> {
        assert!(chunk_size >= 1, "chunk_size must be positive");
        let (tree_size, _) = self.get_sth(source)?;
        if tree_size == 0 {
            return Err(CtError::EmptySpan);
        }
        let mut probes: BTreeMap<u64, DateTime<Utc>> = BTreeMap::new();
        let mut ts_at = |i: u64| -> Result<DateTime<Utc>, CtError> {
            if let Some(t) = probes.get(&i) {
                return Ok(*t);
            }
            let fetched = self.get_entries(source, i, i + 1)?;
            let entry = fetched
                .entries
                .first()
                .ok_or_else(|| CtError::MalformedResponse(format!("probe {i} undecodable")))?;
            probes.insert(i, entry.timestamp);
            Ok(entry.timestamp)
        };
        // first index with ts >= from
        let mut lo = 0u64;
        let mut hi = tree_size;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if ts_at(mid)? < span.0 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let first = lo;
        // first index with ts >= to
        let mut lo = first;
        let mut hi = tree_size;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if ts_at(mid)? < span.1 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let limit = lo;
        if first >= limit {
            return Err(CtError::EmptySpan);
        }
        let mut chunks = Vec::new();
        let mut start = first;
        while start < limit {
            let end = (start + chunk_size).min(limit);
            chunks.push((start, end));
            start += chunk_size + gap;
        }
        Ok(ChunkPlan { chunks, chunk_size, gap, span })
    }

    /// Downloads every chunk of a plan with a small worker pool; results come
    /// back in plan order, one slot per chunk so callers can keep partials.
    pub fn download_plan(
        &self,
        source: &LogSource,
        plan: &ChunkPlan,
        workers: usize,
    ) -> Vec<Result<Fetched, CtError>> {
        let n = plan.chunks.len();
        if n == 0 {
            return Vec::new();
        }
        if workers <= 1 {
            return plan
                .chunks
                .iter()
                .map(|&(s, e)| self.get_entries(source, s, e))
                .collect();
        }
        let slots: Mutex<Vec<Option<Result<Fetched, CtError>>>> =
            Mutex::new((0..n).map(|_| None).collect());
        let cursor = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers.min(n) {
                scope.spawn(|| loop {
                    let job = cursor.fetch_add(1, Ordering::SeqCst);
                    if job >= n {
                        break;
                    }
                    let (s, e) = plan.chunks[job];
                    let result = self.get_entries(source, s, e);
                    slots.lock().unwrap()[job] = Some(result);
                });
            }
        });
        slots.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
    }
}

fn decode_raw(index: u64, raw: &RawEntry) -> Result<LogEntry, String> {
    let leaf = B64
        .decode(raw.leaf_input.as_bytes())
        .map_err(|e| format!("leaf_input base64: {e}"))?;
    decode_leaf(index, leaf)
}

/// Strict MerkleTreeLeaf decoder: v1 timestamped_entry only, no trailing
/// bytes tolerated.
pub fn decode_leaf(index: u64, leaf: Vec<u8>) -> Result<LogEntry, String> {
    let buf = &leaf[..];
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], String> {
        if *pos + n > buf.len() {
            return Err(format!("truncated leaf at byte {pos}", pos = *pos));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let version = take(&mut pos, 1)?[0];
    if version != 0 {
        return Err(format!("unsupported leaf version {version}"));
    }
    let leaf_type = take(&mut pos, 1)?[0];
    if leaf_type != 0 {
        return Err(format!("unsupported leaf type {leaf_type}"));
    }
    let ts_ms = u64::from_be_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let entry_type = u16::from_be_bytes(take(&mut pos, 2)?.try_into().unwrap());
    let (kind, issuer_key_hash) = match entry_type {
        0 => (EntryKind::X509, None),
        1 => {
            let hash: [u8; 32] = take(&mut pos, 32)?.try_into().unwrap();
            (EntryKind::Precert, Some(hash))
        }
        other => return Err(format!("unknown entry type {other}")),
    };
    let len = take(&mut pos, 3)?;
    let cert_len = ((len[0] as usize) << 16) | ((len[1] as usize) << 8) | len[2] as usize;
    let cert_der = take(&mut pos, cert_len)?.to_vec();
    let ext_len = u16::from_be_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
    take(&mut pos, ext_len)?;
    if pos != buf.len() {
        return Err(format!("{} trailing bytes after leaf", buf.len() - pos));
    }
    let timestamp = Utc
        .timestamp_millis_opt(ts_ms as i64)
        .single()
        .ok_or_else(|| format!("leaf timestamp {ts_ms} out of range"))?;
    Ok(LogEntry { index, timestamp, kind, leaf_input: leaf, cert_der, issuer_key_hash })
}

/// Persisted follow position: the next index to fetch.
#[derive(Debug, Clone)]
pub struct Cursor {
    path: PathBuf,
}

impl Cursor {
    pub fn new(path: PathBuf) -> Cursor {
        Cursor { path }
    }

    pub fn load(&self) -> u64 {
        std::fs::read_to_string(&self.path)
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0)
    }

    pub fn store(&self, value: u64) -> std::io::Result<()> {
        let tmp = self.path.with_extension("tmp");
        std::fs::write(&tmp, value.to_string())?;
        std::fs::rename(&tmp, &self.path)
    }
}

#[derive(Debug)]
pub enum FollowEvent {
    Entry(LogEntry),
    Skipped(u64),
    Unreachable(String),
}

/// Follows a log from its persisted cursor, emitting each new entry exactly
/// once per run in index order. The thread exits when `stop` is set or the
/// receiver is dropped.
pub fn follow(
    client: Arc<Client>,
    source: LogSource,
    poll_interval: Duration,
    cursor: Cursor,
    stop: Arc<AtomicBool>,
) -> mpsc::Receiver<FollowEvent> {
    let (tx, rx) = mpsc::sync_channel(1024);
    std::thread::spawn(move || {
        let mut next = cursor.load();
        while !stop.load(Ordering::SeqCst) {
            let tree_size = match client.get_sth(&source) {
                Ok((size, _)) => size,
                Err(e) => {
                    if tx.send(FollowEvent::Unreachable(e.to_string())).is_err() {
                        return;
                    }
                    if sleep_interruptible(poll_interval, &stop) {
                        return;
                    }
                    continue;
                }
            };
            while next < tree_size && !stop.load(Ordering::SeqCst) {
                let end = (next + 1024).min(tree_size);
                match client.get_entries(&source, next, end) {
                    Ok(fetched) => {
                        for entry in fetched.entries {
                            if tx.send(FollowEvent::Entry(entry)).is_err() {
                                return;
                            }
                        }
                        if fetched.skipped > 0
                            && tx.send(FollowEvent::Skipped(fetched.skipped)).is_err()
                        {
                            return;
                        }
                        next = end;
                        if let Err(e) = cursor.store(next) {
                            log::warn!("{}: cursor write failed: {e}", source.name);
                        }
                    }
                    Err(e) => {
                        if tx.send(FollowEvent::Unreachable(e.to_string())).is_err() {
                            return;
                        }
                        break;
                    }
                }
            }
            if sleep_interruptible(poll_interval, &stop) {
                return;
            }
        }
    });
    rx
}

/// Sleeps in small steps so stop requests take effect promptly. True when
/// stopped.
fn sleep_interruptible(total: Duration, stop: &AtomicBool) -> bool {
    let step = Duration::from_millis(20);
    let mut left = total;
    while left > Duration::ZERO {
        if stop.load(Ordering::SeqCst) {
            return true;
        }
        let d = left.min(step);
        std::thread::sleep(d);
        left -= d;
    }
    stop.load(Ordering::SeqCst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_roundtrip_x509() {
        let der = vec![0x30, 0x82, 0x01, 0x00, 0xaa, 0xbb];
        let mut leaf = vec![0u8, 0u8];
        leaf.extend_from_slice(&1_588_291_200_000u64.to_be_bytes());
        leaf.extend_from_slice(&0u16.to_be_bytes());
        leaf.extend_from_slice(&[0, 0, der.len() as u8]);
        leaf.extend_from_slice(&der);
        leaf.extend_from_slice(&0u16.to_be_bytes());
        let entry = decode_leaf(7, leaf).unwrap();
        assert_eq!(entry.kind, EntryKind::X509);
        assert_eq!(entry.cert_der, der);
        assert_eq!(entry.index, 7);
        assert_eq!(entry.timestamp, Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap());
    }

    #[test]
    fn leaf_precert_carries_issuer_hash() {
        let tbs = vec![0x30, 0x03, 0x02, 0x01, 0x05];
        let mut leaf = vec![0u8, 0u8];
        leaf.extend_from_slice(&1_588_291_200_000u64.to_be_bytes());
        leaf.extend_from_slice(&1u16.to_be_bytes());
        leaf.extend_from_slice(&[0x11; 32]);
        leaf.extend_from_slice(&[0, 0, tbs.len() as u8]);
        leaf.extend_from_slice(&tbs);
        leaf.extend_from_slice(&0u16.to_be_bytes());
        let entry = decode_leaf(0, leaf).unwrap();
        assert_eq!(entry.kind, EntryKind::Precert);
        assert_eq!(entry.issuer_key_hash, Some([0x11; 32]));
        assert_eq!(entry.cert_der, tbs);
    }

    #[test]
    fn leaf_rejects_trailing_bytes_and_bad_version() {
        let mut leaf = vec![0u8, 0u8];
        leaf.extend_from_slice(&0u64.to_be_bytes());
        leaf.extend_from_slice(&0u16.to_be_bytes());
        leaf.extend_from_slice(&[0, 0, 1, 0xaa]);
        leaf.extend_from_slice(&0u16.to_be_bytes());
        leaf.push(0xff);
        assert!(decode_leaf(0, leaf.clone()).unwrap_err().contains("trailing"));
        leaf.pop();
        leaf[0] = 1;
        assert!(decode_leaf(0, leaf).unwrap_err().contains("version"));
    }

    #[test]
    fn retry_delays_double_and_cap() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_secs(1));
        assert_eq!(p.delay(1), Duration::from_secs(2));
        assert_eq!(p.delay(5), Duration::from_secs(32));
        assert_eq!(p.delay(6), Duration::from_secs(60));
        assert_eq!(p.delay(20), Duration::from_secs(60));
    }

    #[test]
    fn cursor_roundtrip_and_default() {
        let dir = std::env::temp_dir().join(format!("ctlog-cursor-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cursor = Cursor::new(dir.join("log.cursor"));
        assert_eq!(cursor.load(), 0);
        cursor.store(1005).unwrap();
        assert_eq!(cursor.load(), 1005);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
