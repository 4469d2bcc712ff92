//! Local test doubles: an RFC 6962-shaped CT log server backed by an
//! in-memory leaf list, a corpus synthesizer that plants phishing-style
//! certificates among screened benign ones, and a TLS endpoint for
//! certificate-grab tests.

use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::{TimeZone, Utc};
use ctphish_core::cert::{fingerprint_bytes, CertificateRecord, KeyAlgorithm, SubjectAttr};
use ctphish_core::rng::SplitMix64;
use rcgen::{CertificateParams, DistinguishedName, DnType, Issuer, KeyPair, SerialNumber};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const BASE_TIMESTAMP_MS: u64 = 1_588_291_200_000; // 2020-05-01T00:00:00Z

/// TLS-encodes an x509_entry MerkleTreeLeaf.
pub fn encode_leaf_x509(timestamp_ms: u64, der: &[u8]) -> Vec<u8> {
    let mut leaf = vec![0u8, 0u8];
    leaf.extend_from_slice(&timestamp_ms.to_be_bytes());
    leaf.extend_from_slice(&0u16.to_be_bytes());
    push_len24(&mut leaf, der.len());
    leaf.extend_from_slice(der);
    leaf.extend_from_slice(&0u16.to_be_bytes());
    leaf
}

/// TLS-encodes a precert_entry MerkleTreeLeaf around bare TBS bytes.
pub fn encode_leaf_precert(timestamp_ms: u64, issuer_key_hash: [u8; 32], tbs: &[u8]) -> Vec<u8> {
    let mut leaf = vec![0u8, 0u8];
    leaf.extend_from_slice(&timestamp_ms.to_be_bytes());
    leaf.extend_from_slice(&1u16.to_be_bytes());
    leaf.extend_from_slice(&issuer_key_hash);
    push_len24(&mut leaf, tbs.len());
    leaf.extend_from_slice(tbs);
    leaf.extend_from_slice(&0u16.to_be_bytes());
    leaf
}

fn push_len24(buf: &mut Vec<u8>, len: usize) {
    assert!(len < 1 << 24);
    buf.extend_from_slice(&[(len >> 16) as u8, (len >> 8) as u8, len as u8]);
}

/// Entry list served by the fixture CT server. `visible` is the tree size
/// reported by get-sth; growth tests raise it over time.
pub struct FixtureLog {
    leaves: Vec<Vec<u8>>,
    page_cap: usize,
    visible: AtomicUsize,
    pub entries_requests: AtomicUsize,
    /// Next N requests (any endpoint) answer 429, for retry tests.
    pub fail_next: AtomicUsize,
}

impl FixtureLog {
    pub fn new(leaves: Vec<Vec<u8>>, page_cap: usize) -> FixtureLog {
        let visible = leaves.len();
        FixtureLog {
            leaves,
            page_cap,
            visible: AtomicUsize::new(visible),
            entries_requests: AtomicUsize::new(0),
            fail_next: AtomicUsize::new(0),
        }
    }

    pub fn from_ders(ders: &[Vec<u8>], page_cap: usize) -> FixtureLog {
        let leaves = ders
            .iter()
            .enumerate()
            .map(|(i, der)| encode_leaf_x509(BASE_TIMESTAMP_MS + i as u64 * 1000, der))
            .collect();
        FixtureLog::new(leaves, page_cap)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn visible(&self) -> usize {
        self.visible.load(Ordering::SeqCst)
    }

    pub fn set_visible(&self, n: usize) {
        self.visible.store(n.min(self.leaves.len()), Ordering::SeqCst);
    }

    pub fn advance(&self, n: usize) {
        let now = self.visible();
        self.set_visible(now + n);
    }

    /// Replaces one leaf with undecodable bytes (skip-and-count tests).
    pub fn corrupt(&mut self, index: usize) {
        self.leaves[index] = vec![0xde, 0xad, 0xbe, 0xef];
    }

    fn respond(&self, path: &str, query: &str) -> (u16, String) {
        if self.fail_next.load(Ordering::SeqCst) > 0 {
            self.fail_next.fetch_sub(1, Ordering::SeqCst);
            return (429, "{\"error_message\":\"slow down\"}".into());
        }
        match path {
            "/ct/v1/get-sth" => {
                let body = serde_json::json!({
                    "tree_size": self.visible(),
                    "timestamp": BASE_TIMESTAMP_MS + self.visible() as u64 * 1000,
                    "sha256_root_hash": "",
                    "tree_head_signature": "",
                });
                (200, body.to_string())
            }
            "/ct/v1/get-entries" => {
                self.entries_requests.fetch_add(1, Ordering::SeqCst);
                let mut start: Option<usize> = None;
                let mut end: Option<usize> = None;
                for pair in query.split('&') {
                    let mut kv = pair.splitn(2, '=');
                    match (kv.next(), kv.next()) {
                        (Some("start"), Some(v)) => start = v.parse().ok(),
                        (Some("end"), Some(v)) => end = v.parse().ok(),
                        _ => {}
                    }
                }
                let (Some(start), Some(end)) = (start, end) else {
                    return (400, "{\"error_message\":\"bad query\"}".into());
                };
                let size = self.visible();
                if start > end || end >= size {
                    return (400, "{\"error_message\":\"range out of bounds\"}".into());
                }
                let count = (end - start + 1).min(self.page_cap);
                let entries: Vec<serde_json::Value> = self.leaves[start..start + count]
                    .iter()
                    .map(|leaf| {
                        serde_json::json!({
                            "leaf_input": B64.encode(leaf),
                            "extra_data": "",
                        })
                    })
                    .collect();
                (200, serde_json::json!({ "entries": entries }).to_string())
            }
            _ => (404, "{\"error_message\":\"no such endpoint\"}".into()),
        }
    }
}

pub struct FixtureServer {
    log: Arc<FixtureLog>,
    server: Arc<tiny_http::Server>,
    base_url: String,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start(log: FixtureLog) -> Result<FixtureServer, FixtureError> {
        let log = Arc::new(log);
        let server = Arc::new(
            tiny_http::Server::http("127.0.0.1:0")
                .map_err(|e| std::io::Error::other(e.to_string()))?,
        );
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("no ip addr"))?;
        let base_url = format!("http://{addr}");
        let handle = {
            let server = Arc::clone(&server);
            let log = Arc::clone(&log);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let url = request.url().to_string();
                    let (path, query) = match url.split_once('?') {
                        Some((p, q)) => (p.to_string(), q.to_string()),
                        None => (url, String::new()),
                    };
                    let (status, body) = log.respond(&path, &query);
                    let header = tiny_http::Header::from_bytes(
                        &b"Content-Type"[..],
                        &b"application/json"[..],
                    )
                    .unwrap();
                    let response = tiny_http::Response::from_string(body)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = request.respond(response);
                }
            })
        };
        Ok(FixtureServer { log, server, base_url, handle: Some(handle) })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn log(&self) -> &Arc<FixtureLog> {
        &self.log
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Server spec file: either paths to PEM/DER certificates or a synthesized
/// corpus, plus paging and growth behavior.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    #[serde(default)]
    pub certs: Vec<String>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    #[serde(default)]
    pub page_cap: Option<usize>,
    #[serde(default)]
    pub initial_size: Option<usize>,
    #[serde(default)]
    pub growth: Option<GrowthSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub count: usize,
    pub planted: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSpec {
    pub step: usize,
    pub interval_secs: u64,
}

pub fn load_spec(path: &Path) -> Result<(FixtureLog, Option<GrowthSpec>), FixtureError> {
    let raw = std::fs::read_to_string(path)?;
    let spec: FixtureSpec =
        serde_json::from_str(&raw).map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
    let page_cap = spec.page_cap.unwrap_or(256);
    if page_cap == 0 {
        return Err(FixtureError::SpecInvalid("page_cap must be positive".into()));
    }
    let mut ders: Vec<Vec<u8>> = Vec::new();
    for file in &spec.certs {
        let bytes = std::fs::read(file)
            .map_err(|e| FixtureError::SpecInvalid(format!("{file}: {e}")))?;
        if bytes.starts_with(b"-----BEGIN") {
            ders.extend(pem_blocks(&bytes).map_err(FixtureError::SpecInvalid)?);
        } else {
            ders.push(bytes);
        }
    }
    if let Some(synth) = spec.synth {
        if synth.planted > synth.count {
            return Err(FixtureError::SpecInvalid("planted exceeds count".into()));
        }
        let corpus = synth_corpus(synth.count, synth.planted, synth.seed)
            .map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
        ders.extend(corpus.into_iter().map(|c| c.der));
    }
    if ders.is_empty() {
        return Err(FixtureError::SpecInvalid("no certificates in spec".into()));
    }
    let log = FixtureLog::from_ders(&ders, page_cap);
    if let Some(initial) = spec.initial_size {
        if initial > log.len() {
            return Err(FixtureError::SpecInvalid("initial_size exceeds cert count".into()));
        }
        log.set_visible(initial);
    }
    Ok((log, spec.growth))
}

fn pem_blocks(bytes: &[u8]) -> Result<Vec<Vec<u8>>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let mut blocks = Vec::new();
    let mut body: Option<String> = None;
    for line in text.lines() {
        let line = line.trim();
        if line == "-----BEGIN CERTIFICATE-----" {
            body = Some(String::new());
        } else if line == "-----END CERTIFICATE-----" {
            let b64 = body.take().ok_or("END without BEGIN")?;
            blocks.push(B64.decode(b64.as_bytes()).map_err(|e| e.to_string())?);
        } else if let Some(b) = body.as_mut() {
            b.push_str(line);
        }
    }
    if body.is_some() {
        return Err("unterminated PEM block".into());
    }
    if blocks.is_empty() {
        return Err("no CERTIFICATE blocks found".into());
    }
    Ok(blocks)
}

// Name material for synthesized corpora. Benign tokens are screened so no
// rule keyword occurs as a substring of any generated stem.
const BENIGN_TOKENS: &[&str] = &[
    "cedar", "granite", "harbor", "quartz", "breeze", "meadow", "summit", "willow", "ember",
    "fjord", "lagoon", "pine", "prairie", "tundra", "basalt", "juniper", "lichen", "moraine",
    "quarry", "reef", "shale", "timber", "velvet", "walnut", "zephyr", "bluff", "crag", "dune",
    "elm", "frost", "glacier", "heath", "inlet", "knoll", "larch", "marsh", "nectar", "oasis",
    "pebble", "ridge", "sable", "thicket", "umber", "vale", "wren", "yarrow", "aspen", "birch",
    "cobalt", "delta",
];
const BENIGN_TLDS: &[&str] = &["com", "net", "org", "de", "co.uk"];
const PHISH_BRANDS: &[&str] = &[
    "paypal", "appleid", "amazon", "icloud", "facebook", "ebay", "google", "bankofamerica",
];
const PHISH_EXTRAS: &[&str] = &[
    "secure", "login", "verify", "account", "signin", "update", "security", "auth",
];
const PHISH_TLDS: &[&str] = &["ga", "tk", "ml", "cf", "gq", "xyz", "icu", "top"];

pub const BENIGN_ISSUER_DN: &str = "C=US, O=Fixture Trust Services, CN=Fixture CA 1";
pub const PHISH_ISSUER_DN: &str = "C=US, O=Let's Encrypt, CN=R3";

fn pick<'a>(rng: &mut SplitMix64, pool: &[&'a str]) -> &'a str {
    pool[rng.below(pool.len())]
}

fn benign_name(rng: &mut SplitMix64) -> String {
    // token pairs can form a keyword across the join ("reef"+"reef" hides
    // "free"), so draws that trip any keyword or TLD rule are redrawn
    loop {
        let a = pick(rng, BENIGN_TOKENS);
        let b = pick(rng, BENIGN_TOKENS);
        let tld = pick(rng, BENIGN_TLDS);
        let name = match rng.below(5) {
            0 => format!("{a}.{tld}"),
            1 => format!("{a}-{b}.{tld}"),
            2 => format!("{a}{d}.{b}.{tld}", d = rng.below(10)),
            3 => format!("www.{a}{b}.{tld}"),
            _ => format!("{a}.{b}{d}.{tld}", d = rng.below(10)),
        };
        if rule_points(&name) == 0 {
            return name;
        }
    }
}

fn phish_name(rng: &mut SplitMix64) -> String {
    let brand = pick(rng, PHISH_BRANDS);
    let extra = pick(rng, PHISH_EXTRAS);
    let extra2 = pick(rng, PHISH_EXTRAS);
    let token = pick(rng, BENIGN_TOKENS);
    let tld = pick(rng, PHISH_TLDS);
    match rng.below(5) {
        0 => format!("{brand}-{extra}.{tld}"),
        1 => format!("{extra}-{brand}.{tld}"),
        2 => format!("{brand}.{extra}-{token}.{tld}"),
        3 => format!("{brand}{extra}.{tld}"),
        _ => format!("www.{brand}-{extra}-{extra2}.{tld}"),
    }
}

fn unique_name(
    rng: &mut SplitMix64,
    used: &mut std::collections::HashSet<String>,
    gen: fn(&mut SplitMix64) -> String,
) -> String {
    loop {
        let name = gen(rng);
        if used.insert(name.clone()) {
            return name;
        }
    }
}

fn sans_for(rng: &mut SplitMix64, name: &str) -> Vec<String> {
    match rng.below(4) {
        0 if !name.starts_with("www.") => vec![name.to_string(), format!("www.{name}")],
        1 => vec![name.to_string(), format!("*.{name}")],
        _ => vec![name.to_string()],
    }
}

pub struct SynthCert {
    pub der: Vec<u8>,
    pub name: String,
    pub planted: bool,
}

struct SynthSigner {
    subject_key: KeyPair,
    benign_ca: Issuer<'static, KeyPair>,
    phish_ca: Issuer<'static, KeyPair>,
}

impl SynthSigner {
    fn new() -> Result<SynthSigner, rcgen::Error> {
        let subject_key = KeyPair::try_from(&include_bytes!("../data/ec_p256.p8")[..])?;
        let benign_ca = {
            let mut params = CertificateParams::new(Vec::<String>::new())?;
            params.distinguished_name = DistinguishedName::new();
            params.distinguished_name.push(DnType::CountryName, "US");
            params.distinguished_name.push(DnType::OrganizationName, "Fixture Trust Services");
            params.distinguished_name.push(DnType::CommonName, "Fixture CA 1");
            Issuer::new(params, KeyPair::try_from(&include_bytes!("../data/ec_p256.p8")[..])?)
        };
        let phish_ca = {
            let mut params = CertificateParams::new(Vec::<String>::new())?;
            params.distinguished_name = DistinguishedName::new();
            params.distinguished_name.push(DnType::CountryName, "US");
            params.distinguished_name.push(DnType::OrganizationName, "Let's Encrypt");
            params.distinguished_name.push(DnType::CommonName, "R3");
            Issuer::new(params, KeyPair::try_from(&include_bytes!("../data/ec_p256.p8")[..])?)
        };
        Ok(SynthSigner { subject_key, benign_ca, phish_ca })
    }

    fn issue(
        &self,
        serial: u64,
        cn: &str,
        sans: &[String],
        planted: bool,
    ) -> Result<Vec<u8>, rcgen::Error> {
        let mut params = CertificateParams::new(sans.to_vec())?;
        params.serial_number = Some(SerialNumber::from(serial));
        params.distinguished_name = DistinguishedName::new();
        params.distinguished_name.push(DnType::CommonName, cn);
        if !planted {
            params.distinguished_name.push(DnType::OrganizationName, "Fixture Site Operations");
            params.distinguished_name.push(DnType::CountryName, "US");
        }
        params.not_before = time::OffsetDateTime::from_unix_timestamp(1_588_291_200).unwrap();
        params.not_after = time::OffsetDateTime::from_unix_timestamp(1_596_067_200).unwrap();
        let issuer = if planted { &self.phish_ca } else { &self.benign_ca };
        let cert = params.signed_by(&self.subject_key, issuer)?;
        Ok(cert.der().to_vec())
    }
}

/// Synthesizes `count` certificates with `planted` phishing-style ones at
/// seeded positions. Names are unique across the corpus.
pub fn synth_corpus(count: usize, planted: usize, seed: u64) -> Result<Vec<SynthCert>, FixtureError> {
    assert!(planted <= count);
    let signer = SynthSigner::new().map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
    let mut name_rng = SplitMix64::derive(seed, 0);
    let planted_at: std::collections::HashSet<usize> =
        SplitMix64::derive(seed, 1).sample_indices(count, planted).into_iter().collect();
    let mut used = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let is_planted = planted_at.contains(&i);
        let name = if is_planted {
            unique_name(&mut name_rng, &mut used, phish_name)
        } else {
            unique_name(&mut name_rng, &mut used, benign_name)
        };
        debug_assert!(
            is_planted || rule_points(&name) == 0,
            "benign fixture name {name} trips a rule"
        );
        let sans = sans_for(&mut name_rng, &name);
        let der = signer
            .issue(i as u64 + 1, &name, &sans, is_planted)
            .map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
        out.push(SynthCert { der, name, planted: is_planted });
    }
    Ok(out)
}

/// Keyword/TLD points a name scores regardless of issuer or nesting; the
/// benign generator must keep this at zero.
fn rule_points(name: &str) -> u64 {
    let rules = ctphish_core::rules::RuleSet::bundled();
    let d = ctphish_core::domain::decompose_domain(name);
    let stem = d.stem();
    let mut points: u64 = 0;
    for (kw, w) in &rules.keyword_weights {
        if stem.contains(kw.as_str()) {
            points += u64::from(*w);
        }
    }
    if let Some(w) = rules.suspicious_tlds.get(&d.public_suffix) {
        points += u64::from(*w);
    }
    points
}

/// Builds labeled records straight from the name generators, skipping DER
/// synthesis. Used for validation sets and filter fixtures.
pub fn synth_records(n_benign: usize, n_phish: usize, seed: u64) -> Vec<(CertificateRecord, bool)> {
    let mut rng = SplitMix64::derive(seed, 2);
    let mut used = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n_benign + n_phish);
    for _ in 0..n_benign {
        let name = unique_name(&mut rng, &mut used, benign_name);
        let sans = sans_for(&mut rng, &name);
        out.push((record_for_name(&name, &sans, false), false));
    }
    for i in 0..n_phish {
        if i == 0 {
            // weakest pattern the planted generator can emit, single SAN so
            // thresholds derived from this set never exceed a planted score
            let name = "apple-login.top".to_string();
            used.insert(name.clone());
            let sans = vec![name.clone()];
            out.push((record_for_name(&name, &sans, true), true));
            continue;
        }
        let name = unique_name(&mut rng, &mut used, phish_name);
        let sans = sans_for(&mut rng, &name);
        out.push((record_for_name(&name, &sans, true), true));
    }
    out
}

/// In-memory record equivalent to what the synthesizer's DER would parse to.
pub fn record_for_name(cn: &str, sans: &[String], planted: bool) -> CertificateRecord {
    let issuer_dn = if planted { PHISH_ISSUER_DN } else { BENIGN_ISSUER_DN };
    let subject_attrs = if planted {
        [SubjectAttr::CN].into_iter().collect()
    } else {
        [SubjectAttr::CN, SubjectAttr::O, SubjectAttr::C].into_iter().collect()
    };
    let policy_oids = if planted {
        vec!["2.23.140.1.2.1".to_string()]
    } else {
        vec!["2.23.140.1.2.2".to_string()]
    };
    let extra = if planted { 0 } else { "Fixture Site OperationsUS".chars().count() };
    CertificateRecord {
        fingerprint: fingerprint_bytes(cn.as_bytes()),
        common_name: Some(cn.to_string()),
        sans: sans.to_vec(),
        issuer_dn: issuer_dn.to_string(),
        subject_attrs,
        subject_char_count: (cn.chars().count() + extra) as u32,
        extension_count: 6,
        policy_oids,
        not_before: Utc.timestamp_opt(1_588_291_200, 0).unwrap(),
        not_after: Utc.timestamp_opt(1_596_067_200, 0).unwrap(),
        key_algorithm: KeyAlgorithm::Ec,
        key_size_bits: 256,
        has_ocsp: !planted,
        has_cdp: !planted,
        ct_log_index: None,
        seen_at: Utc.timestamp_opt(1_588_291_200, 0).unwrap(),
    }
}

/// One-shot TLS endpoint presenting a fixed certificate. Counts application
/// bytes received after the handshake so tests can prove no HTTP was sent.
pub struct TlsFixture {
    pub addr: std::net::SocketAddr,
    pub cert_der: Vec<u8>,
    pub app_bytes: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TlsFixture {
    pub fn start(hostname: &str) -> Result<TlsFixture, FixtureError> {
        let key = KeyPair::try_from(&include_bytes!("../data/ec_p256.p8")[..])
            .map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
        let mut params = CertificateParams::new(vec![hostname.to_string()])
            .map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
        params.distinguished_name = DistinguishedName::new();
        params.distinguished_name.push(DnType::CommonName, hostname);
        let cert = params
            .self_signed(&key)
            .map_err(|e| FixtureError::SpecInvalid(e.to_string()))?;
        let cert_der = cert.der().to_vec();

        let provider = Arc::new(rustls::crypto::ring::default_provider());
        let config = rustls::ServerConfig::builder_with_provider(provider)
            .with_safe_default_protocol_versions()
            .map_err(|e| std::io::Error::other(e.to_string()))?
            .with_no_client_auth()
            .with_single_cert(
                vec![rustls_pki_types::CertificateDer::from(cert_der.clone())],
                rustls_pki_types::PrivateKeyDer::Pkcs8(
                    include_bytes!("../data/ec_p256.p8").to_vec().into(),
                ),
            )
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let config = Arc::new(config);

        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let app_bytes = Arc::new(AtomicUsize::new(0));
        let handle = {
            let stop = Arc::clone(&stop);
            let app_bytes = Arc::clone(&app_bytes);
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let Ok((mut stream, _)) = listener.accept() else { break };
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(mut conn) = rustls::ServerConnection::new(Arc::clone(&config)) else {
                        continue;
                    };
                    let _ = stream.set_read_timeout(Some(std::time::Duration::from_millis(200)));
                    while conn.is_handshaking() {
                        if conn.complete_io(&mut stream).is_err() {
                            break;
                        }
                    }
                    // drain anything the client sends post-handshake
                    let mut buf = [0u8; 4096];
                    loop {
                        if conn.read_tls(&mut stream).unwrap_or(0) == 0 {
                            break;
                        }
                        if conn.process_new_packets().is_err() {
                            break;
                        }
                        match std::io::Read::read(&mut conn.reader(), &mut buf) {
                            Ok(0) => break,
                            Ok(n) => {
                                app_bytes.fetch_add(n, Ordering::SeqCst);
                            }
                            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {}
                            Err(_) => break,
                        }
                    }
                }
            })
        };
        Ok(TlsFixture { addr, cert_der, app_bytes, stop, handle: Some(handle) })
    }
}

impl Drop for TlsFixture {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = std::net::TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benign_names_score_no_keyword_or_tld_points() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..2000 {
            let name = benign_name(&mut rng);
            assert_eq!(rule_points(&name), 0, "benign name {name} trips a rule");
        }
    }

    #[test]
    fn phish_names_clear_the_floor() {
        // brand >= 50, extra >= 25, tld >= 15: every pattern scores >= 90
        // keyword/tld points before the issuer rule adds its 10
        let mut rng = SplitMix64::new(12);
        for _ in 0..2000 {
            let name = phish_name(&mut rng);
            assert!(rule_points(&name) >= 90, "{name} scored {}", rule_points(&name));
        }
    }

    #[test]
    fn synth_records_scores_separate_cleanly() {
        let rules = ctphish_core::rules::RuleSet::bundled();
        let records = synth_records(300, 40, 5);
        for (record, phish) in &records {
            let score = ctphish_core::rules::score_rules(record, rules);
            if *phish {
                assert!(score >= 100.0 / 140.0, "phish {:?} scored {score}", record.common_name);
            } else {
                assert!(score < 0.1, "benign {:?} scored {score}", record.common_name);
            }
        }
        let anchor = records.iter().find(|(r, _)| r.common_name.as_deref()
            == Some("apple-login.top")).unwrap();
        let score = ctphish_core::rules::score_rules(&anchor.0, rules);
        assert!((score - 100.0 / 140.0).abs() < 1e-12);
    }

    #[test]
    fn pem_parser_accepts_multiple_blocks() {
        let block = |body: &str| {
            format!("-----BEGIN CERTIFICATE-----\n{body}\n-----END CERTIFICATE-----\n")
        };
        let text = format!("{}{}", block(&B64.encode([1u8, 2, 3])), block(&B64.encode([4u8])));
        let blocks = pem_blocks(text.as_bytes()).unwrap();
        assert_eq!(blocks, vec![vec![1, 2, 3], vec![4]]);
        assert!(pem_blocks(b"-----BEGIN CERTIFICATE-----\nAA==\n").is_err());
    }

    #[test]
    fn corpus_plants_exactly_and_parses() {
        let corpus = synth_corpus(40, 6, 3).unwrap();
        assert_eq!(corpus.len(), 40);
        assert_eq!(corpus.iter().filter(|c| c.planted).count(), 6);
        let record = ctphish_core::cert::parse_der(&corpus[0].der).unwrap();
        assert_eq!(record.common_name.as_deref(), Some(corpus[0].name.as_str()));
        let names: std::collections::HashSet<_> = corpus.iter().map(|c| &c.name).collect();
        assert_eq!(names.len(), 40);
    }
}
