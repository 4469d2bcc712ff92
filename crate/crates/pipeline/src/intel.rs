//! OSINT feed ingestion, the phishing-URL database, the 4-byte hash-prefix
//! set, and the match queries used for dataset filtering and verification.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use ctphish_core::cert::ts_rfc3339;
use ctphish_core::domain::{decompose_domain, DomainName};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntelError {
    #[error("unknown feed format for {feed}: {reason}")]
    UnknownFormat { feed: Source, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("store line {line}: {err}")]
    Corrupt { line: usize, err: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    PhishTank,
    PhishStats,
    OpenPhish,
    Custom,
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Source, String> {
        match s.to_ascii_lowercase().as_str() {
            "phishtank" => Ok(Source::PhishTank),
            "phishstats" => Ok(Source::PhishStats),
            "openphish" => Ok(Source::OpenPhish),
            "custom" => Ok(Source::Custom),
            other => Err(format!("unknown feed source {other}")),
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Source::PhishTank => "phishtank",
            Source::PhishStats => "phishstats",
            Source::OpenPhish => "openphish",
            Source::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntelEntry {
    pub url: String,
    pub host: String,
    pub registered_domain: String,
    pub source: Source,
    #[serde(with = "ts_rfc3339")]
    pub first_seen: DateTime<Utc>,
    #[serde(with = "ts_rfc3339")]
    pub last_fetched: DateTime<Utc>,
}

/// 4-byte SHA-256 prefixes over host expressions `host/` and
/// `registered_domain/`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixSet {
    #[serde(with = "hex_prefixes")]
    pub prefixes: std::collections::BTreeSet<[u8; 4]>,
    #[serde(with = "ts_rfc3339")]
    pub snapshot_time: DateTime<Utc>,
}

impl PrefixSet {
    pub fn empty(snapshot_time: DateTime<Utc>) -> PrefixSet {
        PrefixSet { prefixes: Default::default(), snapshot_time }
    }

    pub fn from_hosts<'a>(
        hosts: impl IntoIterator<Item = &'a str>,
        snapshot_time: DateTime<Utc>,
    ) -> PrefixSet {
        let mut set = PrefixSet::empty(snapshot_time);
        for host in hosts {
            let d = decompose_domain(host);
            for expr in domain_expressions(&d) {
                set.prefixes.insert(hash_prefix(&expr));
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }
}

pub fn hash_prefix(expression: &str) -> [u8; 4] {
    let digest = Sha256::digest(expression.as_bytes());
    [digest[0], digest[1], digest[2], digest[3]]
}

/// The two URL expressions a certificate domain yields: the full host and
/// its registered domain, each with a root path.
pub fn domain_expressions(d: &DomainName) -> Vec<String> {
    let full = d.full.to_lowercase();
    let mut exprs = vec![format!("{full}/")];
    if !d.registered_domain.is_empty() && d.registered_domain != full {
        exprs.push(format!("{}/", d.registered_domain));
    }
    exprs
}

/// True iff any expression of any domain hashes into the set.
pub fn prefix_check(domains: &[DomainName], prefixes: &PrefixSet) -> bool {
    domains.iter().any(|d| {
        domain_expressions(d)
            .iter()
            .any(|expr| prefixes.prefixes.contains(&hash_prefix(expr)))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedSchedule(BTreeMap<Source, Duration>);

impl Default for FeedSchedule {
    fn default() -> FeedSchedule {
        FeedSchedule(BTreeMap::from([
            (Source::PhishTank, Duration::from_secs(3600)),
            (Source::PhishStats, Duration::from_secs(3600)),
            (Source::OpenPhish, Duration::from_secs(12 * 3600)),
        ]))
    }
}

impl FeedSchedule {
    pub fn new(intervals: BTreeMap<Source, Duration>) -> Result<FeedSchedule, String> {
        for (source, interval) in &intervals {
            if *interval < Duration::from_secs(60) {
                return Err(format!("{source} interval below one minute"));
            }
        }
        Ok(FeedSchedule(intervals))
    }

    pub fn interval(&self, source: Source) -> Option<Duration> {
        self.0.get(&source).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Source, Duration)> + '_ {
        self.0.iter().map(|(s, d)| (*s, *d))
    }
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub added: Vec<IntelEntry>,
    pub duplicates: u64,
    pub skipped: u64,
}

/// Append-only JSONL store keyed by (url, source).
pub struct IntelStore {
    path: PathBuf,
    entries: BTreeMap<(String, Source), IntelEntry>,
}

impl IntelStore {
    pub fn open(path: &Path) -> Result<IntelStore, IntelError> {
        let mut entries = BTreeMap::new();
        match std::fs::File::open(path) {
            Ok(f) => {
                for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: IntelEntry = serde_json::from_str(&line)
                        .map_err(|e| IntelError::Corrupt { line: i + 1, err: e.to_string() })?;
                    entries.insert((entry.url.clone(), entry.source), entry);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(IntelStore { path: path.to_path_buf(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses a feed payload, deduplicates against stored (url, source)
    /// pairs, appends the new entries, and reports skip counts.
    pub fn ingest_feed(
        &mut self,
        source: Source,
        raw: &[u8],
        now: DateTime<Utc>,
    ) -> Result<IngestReport, IntelError> {
        let (urls, skipped) = parse_feed(source, raw)?;
        let mut report = IngestReport { skipped, ..Default::default() };
        let mut file: Option<std::fs::File> = None;
        for url in urls {
            let Some(host) = url_host(&url) else {
                report.skipped += 1;
                continue;
            };
            let key = (url.clone(), source);
            if let Some(existing) = self.entries.get_mut(&key) {
                existing.last_fetched = now;
                report.duplicates += 1;
                continue;
            }
            let entry = IntelEntry {
                registered_domain: decompose_domain(&host).registered_domain,
                url,
                host,
                source,
                first_seen: now,
                last_fetched: now,
            };
            let f = match file.as_mut() {
                Some(f) => f,
                None => {
                    if let Some(parent) = self.path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    file.insert(
                        std::fs::OpenOptions::new()
                            .create(true)
                            .append(true)
                            .open(&self.path)?,
                    )
                }
            };
            writeln!(f, "{}", serde_json::to_string(&entry).expect("entry serializes"))?;
            self.entries.insert(key, entry.clone());
            report.added.push(entry);
        }
        Ok(report)
    }

    /// One consistent view for a whole classification or filtering run.
    pub fn snapshot(&self, taken_at: DateTime<Utc>) -> Snapshot {
        let mut hosts: BTreeMap<String, IntelEntry> = BTreeMap::new();
        for entry in self.entries.values() {
            hosts.entry(entry.host.clone()).or_insert_with(|| entry.clone());
        }
        let prefixes = PrefixSet::from_hosts(hosts.keys().map(|h| h.as_str()), taken_at);
        Snapshot { hosts, prefixes, taken_at }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConfirmedPhish,
    NoEvidence,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub hosts: BTreeMap<String, IntelEntry>,
    pub prefixes: PrefixSet,
    pub taken_at: DateTime<Utc>,
}

impl Snapshot {
    /// Exact host match, with a wildcard left-label standing for any single
    /// label.
    pub fn match_domains(&self, domains: &[DomainName]) -> Option<&IntelEntry> {
        for d in domains {
            let full = d.full.to_lowercase();
            if let Some(suffix) = full.strip_prefix("*.") {
                let found = self.hosts.iter().find(|(host, _)| {
                    host.strip_suffix(suffix)
                        .and_then(|head| head.strip_suffix('.'))
                        .is_some_and(|label| !label.is_empty() && !label.contains('.'))
                });
                if let Some((_, entry)) = found {
                    return Some(entry);
                }
            } else if let Some(entry) = self.hosts.get(&full) {
                return Some(entry);
            }
        }
        None
    }

    pub fn prefix_check(&self, domains: &[DomainName]) -> bool {
        prefix_check(domains, &self.prefixes)
    }

    /// confirmed_phish iff the URL database or the prefix set has evidence.
    pub fn verify_hosts(&self, domains: &[String]) -> Verdict {
        let decomposed: Vec<DomainName> = domains.iter().map(|d| decompose_domain(d)).collect();
        if self.match_domains(&decomposed).is_some() || self.prefix_check(&decomposed) {
            Verdict::ConfirmedPhish
        } else {
            Verdict::NoEvidence
        }
    }
}

/// Extracts URLs per source format. Returns (urls, malformed-row count).
fn parse_feed(source: Source, raw: &[u8]) -> Result<(Vec<String>, u64), IntelError> {
    match source {
        Source::OpenPhish | Source::Custom => {
            let text = std::str::from_utf8(raw).map_err(|e| IntelError::UnknownFormat {
                feed: source,
                reason: format!("not UTF-8: {e}"),
            })?;
            Ok((
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(String::from)
                    .collect(),
                0,
            ))
        }
        Source::PhishTank => {
            let head = raw.iter().find(|b| !b.is_ascii_whitespace()).copied();
            if head == Some(b'[') || head == Some(b'{') {
                parse_json_feed(source, raw)
            } else {
                parse_phishtank_csv(raw)
            }
        }
        Source::PhishStats => parse_json_feed(source, raw),
    }
}

fn parse_json_feed(source: Source, raw: &[u8]) -> Result<(Vec<String>, u64), IntelError> {
    let value: serde_json::Value =
        serde_json::from_slice(raw).map_err(|e| IntelError::UnknownFormat {
            feed: source,
            reason: e.to_string(),
        })?;
    let rows = value.as_array().ok_or_else(|| IntelError::UnknownFormat {
        feed: source,
        reason: "expected a JSON array".into(),
    })?;
    let mut urls = Vec::new();
    let mut skipped = 0;
    for row in rows {
        match row.get("url").and_then(|u| u.as_str()) {
            Some(url) if !url.is_empty() => urls.push(url.to_string()),
            _ => skipped += 1,
        }
    }
    Ok((urls, skipped))
}

fn parse_phishtank_csv(raw: &[u8]) -> Result<(Vec<String>, u64), IntelError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(raw);
    let headers = reader.headers().map_err(|e| IntelError::UnknownFormat {
        feed: Source::PhishTank,
        reason: e.to_string(),
    })?;
    let url_col = headers.iter().position(|h| h == "url").ok_or_else(|| {
        IntelError::UnknownFormat {
            feed: Source::PhishTank,
            reason: "CSV header has no url column".into(),
        }
    })?;
    let mut urls = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        match row {
            Ok(record) => match record.get(url_col) {
                Some(url) if !url.is_empty() => urls.push(url.to_string()),
                _ => skipped += 1,
            },
            Err(_) => skipped += 1,
        }
    }
    Ok((urls, skipped))
}

/// Lowercased host of a feed URL; bare hosts get an implied https scheme.
fn url_host(raw: &str) -> Option<String> {
    let parsed = url::Url::parse(raw)
        .or_else(|_| url::Url::parse(&format!("https://{raw}")))
        .ok()?;
    parsed.host_str().map(|h| h.trim_end_matches('.').to_lowercase())
}

mod hex_prefixes {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeSet;

    pub fn serialize<S: Serializer>(v: &BTreeSet<[u8; 4]>, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(hex::encode).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<[u8; 4]>, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        items
            .into_iter()
            .map(|s| {
                let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
                <[u8; 4]>::try_from(bytes.as_slice())
                    .map_err(|_| serde::de::Error::custom("prefix must be 4 bytes"))
            })
            .collect()
    }
}
