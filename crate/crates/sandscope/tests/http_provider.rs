//! The HTTP label source against a local server, plus the on-disk cache.

mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use sandscope::dataset;
use sandscope::provider::{
    HttpSource, LabelCache, LabelProvider, LabelSource, ManualClock, ProviderError, UreqTransport,
};
use sandscope::Error;
use sandscope_core::enrich::MevLabel;
use sandscope_core::synth::SynthConfig;

/// Serves `GET /mevBlock/{n}` from a fixed table. Blocks listed in
/// `statuses` answer with that status instead. Returns the base URL and a
/// request counter.
fn serve(table: BTreeMap<u64, String>, statuses: BTreeMap<u64, u16>) -> (String, Arc<AtomicU64>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicU64::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
                    break;
                }
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let path = request_line.split_whitespace().nth(1).unwrap_or("");
            let block: Option<u64> = path.strip_prefix("/mevBlock/").and_then(|b| b.parse().ok());
            let (status, body) = match block {
                Some(b) if statuses.contains_key(&b) => (statuses[&b], String::new()),
                Some(b) => (200, table.get(&b).cloned().unwrap_or_else(|| "[]".into())),
                None => (404, String::new()),
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (base, hits)
}

fn source(base: &str, clock: Arc<ManualClock>) -> HttpSource {
    HttpSource::new(
        base,
        1000.0,
        Box::new(UreqTransport::new(Duration::from_secs(5))),
        clock,
    )
}

const HASH: &str = "0x00000000000000000000000000000000000000000000000000000000000000aa";

#[test]
fn parses_upstream_spellings_and_ignores_unknown_fields() {
    let body = format!(
        r#"[{{"block_number":7,"tx_hash":"{HASH}","mev_type":"Sandwich","protocol":"uniswap3",
             "user_loss_usd":"1.5","user_swap_volume_usd":"900","user_swap_count":2,"extra":{{"x":1}}}}]"#
    );
    let (base, hits) = serve(BTreeMap::from([(7, body)]), BTreeMap::new());
    let src = source(&base, Arc::new(ManualClock::default()));
    let labels = src.block_labels(7).unwrap();
    assert_eq!(labels.len(), 1);
    let l = &labels[0];
    assert_eq!(l.block_number, 7);
    assert_eq!(l.mev_type.as_str(), "sandwich");
    assert_eq!(l.swap_count, Some(2));
    assert_eq!(l.swap_volume_usd.unwrap().to_string(), "900");
    assert!(src.block_labels(8).unwrap().is_empty());
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    assert_eq!(src.request_count(), 2);
}

#[test]
fn server_errors_retry_with_backoff_then_give_up() {
    let (base, hits) = serve(BTreeMap::new(), BTreeMap::from([(5, 503)]));
    let clock = Arc::new(ManualClock::default());
    let src = source(&base, clock.clone());
    let err = src.block_labels(5).unwrap_err();
    assert!(
        matches!(err, ProviderError::ProviderUnavailable { attempts: 4, .. }),
        "{err}"
    );
    assert_eq!(hits.load(Ordering::SeqCst), 4);
    let backoff: Vec<Duration> = clock
        .sleeps()
        .into_iter()
        .filter(|d| *d >= Duration::from_secs(1))
        .collect();
    assert_eq!(backoff, [1, 2, 4].map(Duration::from_secs));
    assert_eq!(Error::from(err).exit_code(), 4);
}

#[test]
fn client_errors_fail_without_retry() {
    let (base, hits) = serve(BTreeMap::new(), BTreeMap::from([(5, 404)]));
    let src = source(&base, Arc::new(ManualClock::default()));
    let err = src.block_labels(5).unwrap_err();
    assert!(matches!(err, ProviderError::ProviderUnavailable { attempts: 1, .. }));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (base, _) = serve(BTreeMap::from([(3, "{not json".to_string())]), BTreeMap::new());
    let src = source(&base, Arc::new(ManualClock::default()));
    assert!(matches!(
        src.block_labels(3),
        Err(ProviderError::MalformedResponse { .. })
    ));
}

#[test]
fn disk_cache_serves_second_provider_without_requests() {
    let body = format!(r#"[{{"tx_hash":"{HASH}","mev_type":"arb"}}]"#);
    let (base, hits) = serve(BTreeMap::from([(11, body)]), BTreeMap::new());
    let dir = tempfile::tempdir().unwrap();
    let blocks = [10, 11, 12];

    let first = LabelProvider::new(
        Box::new(source(&base, Arc::new(ManualClock::default()))),
        Some(LabelCache::new(dir.path())),
        2,
    );
    let a = first.fetch_blocks(&blocks).unwrap();
    assert_eq!(first.request_count(), 3);
    // memory cache: asking again costs nothing
    assert_eq!(first.fetch_blocks(&blocks).unwrap(), a);
    assert_eq!(first.request_count(), 3);

    let second = LabelProvider::new(
        Box::new(source(&base, Arc::new(ManualClock::default()))),
        Some(LabelCache::new(dir.path())),
        2,
    );
    let b: Vec<MevLabel> = second.fetch_blocks(&blocks).unwrap();
    assert_eq!(a, b);
    assert_eq!(second.request_count(), 0);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert!(dir.path().join("11.jsonl").is_file());
}

#[test]
fn cli_enrich_over_http_uses_cache_on_rerun() {
    let data = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        seed: 9,
        n_blocks: 40,
        n_addresses: 30,
        n_attackers: 2,
        span_days: 70,
        fork_block_count: 2,
        ..SynthConfig::default()
    };
    let (chain, _) = dataset::write_dataset(&cfg, data.path()).unwrap();
    let mut table: BTreeMap<u64, Vec<serde_json::Value>> = BTreeMap::new();
    for l in &chain.labels {
        table
            .entry(l.block_number)
            .or_default()
            .push(serde_json::to_value(l).unwrap());
    }
    let table = table
        .into_iter()
        .map(|(b, v)| (b, serde_json::to_string(&v).unwrap()))
        .collect();
    let (base, hits) = serve(table, BTreeMap::new());
    let cache = data.path().join("cache");
    let out = data.path().join("out");

    let run = || {
        Command::new(common::bin())
            .arg("--config")
            .arg(data.path().join(dataset::RUN_CONFIG))
            .args([
                "--provider",
                "http",
                "--base-url",
                &base,
                "--max-requests-per-second",
                "1000",
            ])
            .arg("--cache-dir")
            .arg(&cache)
            .arg("--out")
            .arg(&out)
            .arg("all")
            .output()
            .unwrap()
    };
    let first = run();
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let distinct_blocks = chain
        .txs
        .iter()
        .map(|t| t.block_number)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    assert_eq!(hits.load(Ordering::SeqCst), distinct_blocks as u64);
    let bundle = common::tree(&out, false);

    let second = run();
    assert!(second.status.success());
    assert_eq!(hits.load(Ordering::SeqCst), distinct_blocks as u64);
    assert_eq!(common::tree(&out, false), bundle);
}

#[test]
fn unreachable_provider_exits_4() {
    let data = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_blocks: 10,
        n_addresses: 10,
        n_attackers: 1,
        span_days: 70,
        fork_block_count: 1,
        ..SynthConfig::default()
    };
    dataset::write_dataset(&cfg, data.path()).unwrap();
    // bind then drop to get a port nobody listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let status = Command::new(common::bin())
        .arg("--config")
        .arg(data.path().join(dataset::RUN_CONFIG))
        .args(["--provider", "http", "--base-url", &format!("http://127.0.0.1:{port}")])
        .args(["--max-requests-per-second", "1000"])
        .arg("all")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}
