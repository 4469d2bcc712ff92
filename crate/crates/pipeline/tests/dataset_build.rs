//! Benign-side dataset building against the fixture log: filter ordering,
//! exact drop accounting, and partial-fetch warnings.

use std::time::Duration;

use chrono::{TimeZone, Utc};
use ctphish::ctlog::{ChunkPlan, Client, LogSource, RetryPolicy};
use ctphish::dataset::{build_benign, FilterLists};
use ctphish::fixture::{synth_corpus, FixtureLog, FixtureServer, BASE_TIMESTAMP_MS};
use ctphish::intel::{hash_prefix, IntelStore, Source};
use ctphish_core::domain::decompose_domain;

fn fast_client() -> Client {
    Client::with_retry(RetryPolicy {
        base: Duration::from_millis(1),
        factor: 2,
        cap: Duration::from_millis(5),
        max_attempts: 3,
    })
}

fn whole_span() -> (chrono::DateTime<Utc>, chrono::DateTime<Utc>) {
    (
        Utc.timestamp_millis_opt(BASE_TIMESTAMP_MS as i64).unwrap(),
        Utc.timestamp_millis_opt((BASE_TIMESTAMP_MS + 100_000_000) as i64).unwrap(),
    )
}

#[test]
fn benign_build_accounts_for_every_drop() {
    let corpus = synth_corpus(20, 0, 77).unwrap();
    let mut ders: Vec<Vec<u8>> = corpus.iter().map(|c| c.der.clone()).collect();
    ders.push(ders[3].clone());
    ders.push(ders[5].clone());
    ders.push(ders[0].clone());
    let mut log = FixtureLog::from_ders(&ders, 8);
    log.corrupt(22); // the extra copy of leaf 0 becomes undecodable
    let server = FixtureServer::start(log).unwrap();
    let source = LogSource::new("fixture", server.base_url());

    let dir = tempfile::tempdir().unwrap();
    let t = Utc.with_ymd_and_hms(2020, 5, 2, 0, 0, 0).unwrap();
    let mut store = IntelStore::open(&dir.path().join("intel.jsonl")).unwrap();
    store
        .ingest_feed(Source::OpenPhish, format!("https://{}/\n", corpus[7].name).as_bytes(), t)
        .unwrap();
    let mut intel = store.snapshot(t);
    // plant a pure prefix collision: hashed expression without a DB host
    intel.prefixes.prefixes.insert(hash_prefix(&format!("{}/", corpus[2].name)));

    let mut filters = FilterLists::bundled();
    filters
        .malicious_domains
        .insert(decompose_domain(&corpus[9].name).registered_domain);

    let client = fast_client();
    // an explicit plan, since timestamp probes cannot land on a corrupt leaf
    let plan = ChunkPlan { chunks: vec![(0, 8), (8, 16), (16, 23)], chunk_size: 8, gap: 0, span: whole_span() };
    let report = build_benign(&client, &source, &plan, &filters, &intel, 2);

    assert_eq!(report.parse_skipped, 1);
    assert_eq!(report.input, 22);
    assert_eq!(report.drops.duplicate, 2);
    assert_eq!(report.drops.phishing_db, 1);
    assert_eq!(report.drops.prefix, 1);
    assert_eq!(report.drops.malicious_domain, 1);
    assert_eq!(report.drops.benign_service + report.drops.popular_domain, 0);
    assert_eq!(report.input, report.records.len() as u64 + report.drops.total());
    assert_eq!(report.records.len(), 17);
    assert!(report.warnings.is_empty());

    let kept: Vec<&str> = report.records.iter().filter_map(|r| r.common_name.as_deref()).collect();
    for gone in [2usize, 7, 9] {
        assert!(!kept.contains(&corpus[gone].name.as_str()), "{} must be dropped", corpus[gone].name);
    }
}

#[test]
fn empty_malicious_list_drops_nothing_by_that_reason() {
    let corpus = synth_corpus(10, 0, 78).unwrap();
    let ders: Vec<Vec<u8>> = corpus.iter().map(|c| c.der.clone()).collect();
    let server = FixtureServer::start(FixtureLog::from_ders(&ders, 8)).unwrap();
    let source = LogSource::new("fixture", server.base_url());

    let dir = tempfile::tempdir().unwrap();
    let t = Utc.with_ymd_and_hms(2020, 5, 2, 0, 0, 0).unwrap();
    let intel = IntelStore::open(&dir.path().join("intel.jsonl")).unwrap().snapshot(t);
    let filters = FilterLists::bundled();
    assert!(filters.malicious_domains.is_empty());

    let client = fast_client();
    let plan = client.plan_chunks(&source, 8, 0, whole_span()).unwrap();
    let report = build_benign(&client, &source, &plan, &filters, &intel, 2);
    assert_eq!(report.drops.malicious_domain, 0);
    assert_eq!(report.records.len(), 10);
}

#[test]
fn failed_chunks_become_warnings_not_errors() {
    let corpus = synth_corpus(12, 0, 79).unwrap();
    let ders: Vec<Vec<u8>> = corpus.iter().map(|c| c.der.clone()).collect();
    let server = FixtureServer::start(FixtureLog::from_ders(&ders, 8)).unwrap();
    let source = LogSource::new("fixture", server.base_url());

    let dir = tempfile::tempdir().unwrap();
    let t = Utc.with_ymd_and_hms(2020, 5, 2, 0, 0, 0).unwrap();
    let intel = IntelStore::open(&dir.path().join("intel.jsonl")).unwrap().snapshot(t);

    let client = fast_client();
    let plan = client.plan_chunks(&source, 3, 0, whole_span()).unwrap();
    assert_eq!(plan.chunks.len(), 4);
    // exhaust retries for exactly the first chunk, after planning probes
    server.log().fail_next.store(3, std::sync::atomic::Ordering::SeqCst);
    let report = build_benign(&client, &source, &plan, &FilterLists::bundled(), &intel, 1);

    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("[0,3)"), "warning names the chunk: {}", report.warnings[0]);
    assert_eq!(report.records.len(), 9);
    assert_eq!(report.input, report.records.len() as u64 + report.drops.total());
}
