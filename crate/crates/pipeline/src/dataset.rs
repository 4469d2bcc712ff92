//! Labeled dataset production: benign certificates out of CT chunks run
//! through the intel filters, malicious certificates grabbed from live
//! phishing URLs, and balanced assembly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use ctphish_core::cert::CertificateRecord;
use ctphish_core::domain::decompose_domain;
use ctphish_core::model::Label;
use ctphish_core::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctlog::{ChunkPlan, Client, LogSource};
use crate::intel::Snapshot;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0} class is empty")]
    EmptyClass(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {err}")]
    Corrupt { line: usize, err: String },
    #[error("duplicate fingerprint across labels: {0}")]
    LabelConflict(String),
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("bad url {url}: {reason}")]
    BadUrl { url: String, reason: String },
    #[error("connect to {addr} failed: {reason}")]
    ConnectFailed { addr: String, reason: String },
    #[error("handshake with {host} failed: {reason}")]
    HandshakeFailed { host: String, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct FilterLists {
    pub benign_services: std::collections::BTreeSet<String>,
    pub popular_domains: std::collections::BTreeSet<String>,
    pub malicious_domains: std::collections::BTreeSet<String>,
}

fn read_domain_set(raw: &str) -> std::collections::BTreeSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

impl FilterLists {
    /// Packaged defaults: the URL-shortener/hosting list and the popular
    /// domains list; the malicious-domains list starts empty.
    pub fn bundled() -> FilterLists {
        FilterLists {
            benign_services: read_domain_set(include_str!("../data/benign_services.txt")),
            popular_domains: read_domain_set(include_str!(
                "../../core/data/popular_domains.txt"
            )),
            malicious_domains: Default::default(),
        }
    }

    pub fn load(
        benign_services: Option<&Path>,
        popular_domains: Option<&Path>,
        malicious_domains: Option<&Path>,
    ) -> std::io::Result<FilterLists> {
        let mut lists = FilterLists::bundled();
        if let Some(p) = benign_services {
            lists.benign_services = read_domain_set(&std::fs::read_to_string(p)?);
        }
        if let Some(p) = popular_domains {
            lists.popular_domains = read_domain_set(&std::fs::read_to_string(p)?);
        }
        if let Some(p) = malicious_domains {
            lists.malicious_domains = read_domain_set(&std::fs::read_to_string(p)?);
        }
        Ok(lists)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Labeled {
    pub label: Label,
    pub provenance: String,
    pub record: CertificateRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<Labeled>,
    pub created_at: DateTime<Utc>,
}

impl LabeledDataset {
    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for item in &self.records {
            writeln!(f, "{}", serde_json::to_string(item).expect("labeled record serializes"))?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LabeledDataset, DatasetError> {
        let f = std::fs::File::open(path)?;
        let mut records = Vec::new();
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: Labeled = serde_json::from_str(&line)
                .map_err(|e| DatasetError::Corrupt { line: i + 1, err: e.to_string() })?;
            records.push(item);
        }
        let created_at = records
            .iter()
            .map(|r| r.record.seen_at)
            .max()
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
        Ok(LabeledDataset { records, created_at })
    }

    pub fn training_pairs(&self) -> Vec<(CertificateRecord, Label)> {
        self.records.iter().map(|r| (r.record.clone(), r.label)).collect()
    }
}

/// Per-reason drop accounting; input = kept + sum of drops.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct DropCounts {
    pub duplicate: u64,
    pub phishing_db: u64,
    pub prefix: u64,
    pub malicious_domain: u64,
    pub benign_service: u64,
    pub popular_domain: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.duplicate
            + self.phishing_db
            + self.prefix
            + self.malicious_domain
            + self.benign_service
            + self.popular_domain
    }
}

#[derive(Debug, Default)]
pub struct FilterReport {
    pub records: Vec<CertificateRecord>,
    pub input: u64,
    pub parse_skipped: u64,
    pub drops: DropCounts,
    pub warnings: Vec<String>,
}

/// The benign-side filters, in order: dedup, phishing-DB match, prefix
/// collision, malicious-domain list. Exactly one reason per dropped record.
pub fn filter_benign(
    records: Vec<CertificateRecord>,
    filters: &FilterLists,
    intel: &Snapshot,
) -> FilterReport {
    let mut report = FilterReport { input: records.len() as u64, ..Default::default() };
    let mut seen = std::collections::HashSet::new();
    for record in records {
        if !seen.insert(record.fingerprint) {
            report.drops.duplicate += 1;
            continue;
        }
        let domains: Vec<_> = record.domains().iter().map(|d| decompose_domain(d)).collect();
        if intel.match_domains(&domains).is_some() {
            report.drops.phishing_db += 1;
            continue;
        }
        if intel.prefix_check(&domains) {
            report.drops.prefix += 1;
            continue;
        }
        if domains.iter().any(|d| filters.malicious_domains.contains(&d.registered_domain)) {
            report.drops.malicious_domain += 1;
            continue;
        }
        report.records.push(record);
    }
    report
}

/// Downloads a chunk plan and runs the benign filters over the parsed
/// records. Chunk failures become warnings, not hard errors.
pub fn build_benign(
    client: &Client,
    source: &LogSource,
    plan: &ChunkPlan,
    filters: &FilterLists,
    intel: &Snapshot,
    workers: usize,
) -> FilterReport {
    let mut records = Vec::new();
    let mut parse_skipped = 0u64;
    let mut warnings = Vec::new();
    for (chunk, result) in plan.chunks.iter().zip(client.download_plan(source, plan, workers)) {
        match result {
            Ok(fetched) => {
                parse_skipped += fetched.skipped;
                for entry in fetched.entries {
                    match entry.to_record(&source.name) {
                        Ok(record) => records.push(record),
                        Err(e) => {
                            parse_skipped += 1;
                            log::debug!("{}: entry {}: {e}", source.name, entry.index);
                        }
                    }
                }
            }
            Err(e) => warnings.push(format!("chunk [{},{}): {e}", chunk.0, chunk.1)),
        }
    }
    let mut report = filter_benign(records, filters, intel);
    report.parse_skipped = parse_skipped;
    report.warnings = warnings;
    report
}

/// The malicious-side filters: dedup, then the benign-services and
/// popular-domains lists on every domain's registered domain.
pub fn filter_malicious(records: Vec<CertificateRecord>, filters: &FilterLists) -> FilterReport {
    let mut report = FilterReport { input: records.len() as u64, ..Default::default() };
    let mut seen = std::collections::HashSet::new();
    for record in records {
        if !seen.insert(record.fingerprint) {
            report.drops.duplicate += 1;
            continue;
        }
        let registered: Vec<String> = record
            .domains()
            .iter()
            .map(|d| decompose_domain(d).registered_domain)
            .collect();
        if registered.iter().any(|r| filters.benign_services.contains(r)) {
            report.drops.benign_service += 1;
            continue;
        }
        if registered.iter().any(|r| filters.popular_domains.contains(r)) {
            report.drops.popular_domain += 1;
            continue;
        }
        report.records.push(record);
    }
    report
}

/// Captures the leaf certificate a TLS endpoint presents, without
/// validating the chain and without ever writing application data, so
/// redirects cannot fire.
pub fn fetch_malicious_cert(url: &str) -> Result<CertificateRecord, FetchError> {
    fetch_malicious_cert_with(url, Duration::from_secs(10), 2)
}

pub fn fetch_malicious_cert_with(
    url: &str,
    timeout: Duration,
    attempts: u32,
) -> Result<CertificateRecord, FetchError> {
    let (host, port) = split_host_port(url)?;
    let addr = format!("{host}:{port}");
    let mut last = FetchError::ConnectFailed { addr: addr.clone(), reason: "no attempt".into() };
    for _ in 0..attempts.max(1) {
        match grab_leaf(&host, port, timeout) {
            Ok(record) => return Ok(record),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn split_host_port(url: &str) -> Result<(String, u16), FetchError> {
    let bad = |reason: &str| FetchError::BadUrl { url: url.into(), reason: reason.into() };
    let parsed = match url::Url::parse(url) {
        Ok(p) => p,
        // bare "host/path" feeds lack a scheme; anything else is broken
        Err(url::ParseError::RelativeUrlWithoutBase) => {
            url::Url::parse(&format!("https://{url}")).map_err(|e| bad(&e.to_string()))?
        }
        Err(e) => return Err(bad(&e.to_string())),
    };
    if !matches!(parsed.scheme(), "https" | "http") {
        return Err(bad("unsupported scheme"));
    }
    let host = parsed.host_str().ok_or_else(|| bad("no host"))?.to_lowercase();
    Ok((host, parsed.port().unwrap_or(443)))
}

struct AcceptAnyCert(Arc<rustls::crypto::CryptoProvider>);

impl std::fmt::Debug for AcceptAnyCert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AcceptAnyCert")
    }
}

impl rustls::client::danger::ServerCertVerifier for AcceptAnyCert {
    fn verify_server_cert(
        &self,
        _end_entity: &rustls_pki_types::CertificateDer<'_>,
        _intermediates: &[rustls_pki_types::CertificateDer<'_>],
        _server_name: &rustls_pki_types::ServerName<'_>,
        _ocsp_response: &[u8],
        _now: rustls_pki_types::UnixTime,
    ) -> Result<rustls::client::danger::ServerCertVerified, rustls::Error> {
        Ok(rustls::client::danger::ServerCertVerified::assertion())
    }

    fn verify_tls12_signature(
        &self,
        _message: &[u8],
        _cert: &rustls_pki_types::CertificateDer<'_>,
        _dss: &rustls::DigitallySignedStruct,
    ) -> Result<rustls::client::danger::HandshakeSignatureValid, rustls::Error> {
        Ok(rustls::client::danger::HandshakeSignatureValid::assertion())
    }

    fn verify_tls13_signature(
        &self,
        _message: &[u8],
        _cert: &rustls_pki_types::CertificateDer<'_>,
        _dss: &rustls::DigitallySignedStruct,
    ) -> Result<rustls::client::danger::HandshakeSignatureValid, rustls::Error> {
        Ok(rustls::client::danger::HandshakeSignatureValid::assertion())
    }

    fn supported_verify_schemes(&self) -> Vec<rustls::SignatureScheme> {
        self.0.signature_verification_algorithms.supported_schemes()
    }
}

fn grab_leaf(host: &str, port: u16, timeout: Duration) -> Result<CertificateRecord, FetchError> {
    let addr_str = format!("{host}:{port}");
    let connect_failed = |reason: String| FetchError::ConnectFailed {
        addr: addr_str.clone(),
        reason,
    };
    let handshake_failed = |reason: String| FetchError::HandshakeFailed {
        host: host.into(),
        reason,
    };

    let addr = addr_str
        .to_socket_addrs()
        .map_err(|e| connect_failed(e.to_string()))?
        .next()
        .ok_or_else(|| connect_failed("no address".into()))?;
    let mut stream =
        TcpStream::connect_timeout(&addr, timeout).map_err(|e| connect_failed(e.to_string()))?;
    stream
        .set_read_timeout(Some(timeout))
        .and_then(|_| stream.set_write_timeout(Some(timeout)))
        .map_err(|e| connect_failed(e.to_string()))?;

    let provider = Arc::new(rustls::crypto::ring::default_provider());
    let config = rustls::ClientConfig::builder_with_provider(Arc::clone(&provider))
        .with_safe_default_protocol_versions()
        .map_err(|e| handshake_failed(e.to_string()))?
        .dangerous()
        .with_custom_certificate_verifier(Arc::new(AcceptAnyCert(provider)))
        .with_no_client_auth();
    let server_name = rustls_pki_types::ServerName::try_from(host.to_string())
        .map_err(|e| handshake_failed(e.to_string()))?;
    let mut conn = rustls::ClientConnection::new(Arc::new(config), server_name)
        .map_err(|e| handshake_failed(e.to_string()))?;

    while conn.is_handshaking() {
        conn.complete_io(&mut stream).map_err(|e| handshake_failed(e.to_string()))?;
    }
    let leaf = conn
        .peer_certificates()
        .and_then(|certs| certs.first())
        .ok_or_else(|| handshake_failed("no certificate presented".into()))?;
    let record = ctphish_core::cert::parse_der(leaf.as_ref())
        .map_err(|e| handshake_failed(format!("unparseable leaf: {e}")))?;
    conn.send_close_notify();
    let _ = conn.complete_io(&mut stream);
    Ok(record)
}

/// Balanced assembly: with `balance`, the larger class is uniformly
/// subsampled to the smaller one with the given seed. A fingerprint seen
/// under both labels is treated as phish evidence and removed from benign.
pub fn assemble(
    benign: Vec<CertificateRecord>,
    phish: Vec<CertificateRecord>,
    balance: bool,
    seed: u64,
) -> Result<LabeledDataset, DatasetError> {
    if benign.is_empty() {
        return Err(DatasetError::EmptyClass("benign"));
    }
    if phish.is_empty() {
        return Err(DatasetError::EmptyClass("phish"));
    }
    let phish = dedup(phish);
    let phish_prints: std::collections::HashSet<[u8; 32]> =
        phish.iter().map(|r| r.fingerprint).collect();
    let benign: Vec<_> = dedup(benign)
        .into_iter()
        .filter(|r| !phish_prints.contains(&r.fingerprint))
        .collect();
    if benign.is_empty() {
        return Err(DatasetError::EmptyClass("benign"));
    }

    let (benign, phish) = if balance {
        let target = benign.len().min(phish.len());
        (
            subsample(benign, target, SplitMix64::derive(seed, 0)),
            subsample(phish, target, SplitMix64::derive(seed, 1)),
        )
    } else {
        (benign, phish)
    };

    let mut records: Vec<Labeled> = Vec::with_capacity(benign.len() + phish.len());
    records.extend(benign.into_iter().map(|record| Labeled {
        label: Label::Benign,
        provenance: provenance_of(&record, "ct"),
        record,
    }));
    records.extend(phish.into_iter().map(|record| Labeled {
        label: Label::Phish,
        provenance: provenance_of(&record, "feed"),
        record,
    }));
    let created_at = records
        .iter()
        .map(|r| r.record.seen_at)
        .max()
        .expect("records nonempty");
    Ok(LabeledDataset { records, created_at })
}

fn provenance_of(record: &CertificateRecord, fallback: &str) -> String {
    match &record.ct_log_index {
        Some(idx) => format!("ct:{}:{}", idx.log, idx.index),
        None => fallback.to_string(),
    }
}

fn dedup(records: Vec<CertificateRecord>) -> Vec<CertificateRecord> {
    let mut seen = std::collections::HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.fingerprint)).collect()
}

fn subsample(records: Vec<CertificateRecord>, target: usize, mut rng: SplitMix64) -> Vec<CertificateRecord> {
    if records.len() <= target {
        return records;
    }
    let keep = rng.sample_indices(records.len(), target);
    let keep: std::collections::HashSet<usize> = keep.into_iter().collect();
    records
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| keep.contains(&i).then_some(r))
        .collect()
}

/// Drop counts keyed by reason name, for summaries.
pub fn drop_map(drops: &DropCounts) -> BTreeMap<&'static str, u64> {
    BTreeMap::from([
        ("duplicate", drops.duplicate),
        ("phishing_db", drops.phishing_db),
        ("prefix", drops.prefix),
        ("malicious_domain", drops.malicious_domain),
        ("benign_service", drops.benign_service),
        ("popular_domain", drops.popular_domain),
    ])
}
