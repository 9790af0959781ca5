//! Full pipeline on the committed fixture against the committed bundle.
//! Set `UPDATE_GOLDEN=1` to rewrite the bundle after an intended change.

mod common;

use std::collections::BTreeSet;

use common::*;
use sandscope::io;
use sandscope_core::analytics::BehaviorTables;
use sandscope_core::detect::{blocks, SandwichEvent};
use sandscope_core::enrich::apply_labels;
use sandscope_core::ingest::{label_visibility, TieRule};
use sandscope_core::synth::{oracle_behavior, oracle_detect};

#[test]
fn bundle_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    run_fixture(dir.path(), 2);
    let got = tree(dir.path(), false);
    let golden = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = std::fs::remove_dir_all(&golden);
        for (rel, bytes) in &got {
            let p = golden.join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, bytes).unwrap();
        }
    }
    let want = tree(&golden, false);
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
    for (rel, bytes) in &want {
        assert!(got[rel] == *bytes, "{rel} differs from the golden bundle");
    }
}

fn oracle_inputs() -> (Vec<sandscope_core::model::TxRecord>, Vec<SandwichEvent>) {
    let f = fixture_dir();
    let raw = io::load_transactions(&f.join("transactions.csv"), None).unwrap();
    let mempool = io::load_mempool(&f.join("mempool.csv")).unwrap();
    let labels = io::load_labels(&f.join("labels.jsonl")).unwrap();
    let txs = apply_labels(&label_visibility(&raw, &mempool, TieRule::Inclusive), &labels).unwrap();
    let events = blocks(&txs).flat_map(oracle_detect).collect();
    (txs, events)
}

#[test]
fn golden_events_equal_oracle_detection() {
    let (_, events) = oracle_inputs();
    let golden: Vec<SandwichEvent> = io::load_events(&golden_dir().join("events.jsonl")).unwrap();
    assert!(!events.is_empty());
    assert_eq!(golden, events);
}

#[test]
fn golden_behavior_tables_equal_oracle() {
    let (txs, events) = oracle_inputs();
    let end = txs.iter().map(|t| t.timestamp).max().unwrap();
    let o: BehaviorTables = oracle_behavior(&txs, &events, 60, 10, end);
    let g = golden_dir();

    let churn = read_csv(&g.join("churn.csv"));
    assert_eq!(churn.len(), o.churn.rows.len());
    for (row, r) in churn.iter().zip(&o.churn.rows) {
        assert_eq!(
            row[..3],
            [
                r.n.to_string(),
                r.cohort_size.to_string(),
                r.reactivated_count.to_string()
            ]
        );
        let rate = r.churn_rate().map(|x| format!("{x:.6}")).unwrap_or_default();
        assert_eq!(row[3], rate);
    }
    for (file, table) in [
        ("adoption_all.csv", &o.adoption_all),
        ("adoption_reactivated.csv", &o.adoption_reactivated),
    ] {
        let rows = read_csv(&g.join(file));
        for (row, r) in rows.iter().zip(&table.rows) {
            assert_eq!(
                row[..3],
                [r.n.to_string(), r.population.to_string(), r.switched_count.to_string()]
            );
        }
    }
    for (prefix, curves) in [
        ("reactivation", &o.reactivation_curves),
        ("adoption_all", &o.adoption_curves_all),
        ("adoption_reactivated", &o.adoption_curves_reactivated),
    ] {
        for c in curves {
            let rows = read_csv(&g.join(format!("curves/{prefix}_n{}.csv", c.n)));
            assert_eq!(rows.len(), 61);
            for (t, row) in rows.iter().enumerate() {
                let f = if c.population == 0 {
                    0.0
                } else {
                    c.cumulative[t] as f64 / c.population as f64
                };
                assert_eq!(row[1], format!("{f:.6}"), "{prefix} n={} day {t}", c.n);
            }
        }
    }
}

#[test]
fn golden_fork_report_equals_set_intersection() {
    let (_, events) = oracle_inputs();
    let forks = io::load_forks(&fixture_dir().join("forks.txt")).unwrap();
    let event_blocks: Vec<u64> = events.iter().map(|e| e.block_number).collect();
    let fork_set: BTreeSet<u64> = forks.0.iter().copied().collect();
    let removed = event_blocks.iter().filter(|b| fork_set.contains(b)).count() as u64;
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(golden_dir().join("fork_report.json")).unwrap()).unwrap();
    assert_eq!(report["removed_count"], removed);
    assert_eq!(report["events_after"], events.len() as u64 - removed);
}
