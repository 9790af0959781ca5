//! Library-level pipeline checks on generated data.

mod common;

use std::time::Instant;

use sandscope::{dataset, io, Pipeline, RunConfig};
use sandscope_core::enrich::apply_labels;
use sandscope_core::ingest::{label_visibility, TieRule};
use sandscope_core::synth::{generate_chain, PlantedSandwich, SynthConfig};

fn fixture_synth() -> SynthConfig {
    #[derive(serde::Deserialize)]
    struct Wrapper {
        synth: SynthConfig,
    }
    let text = std::fs::read_to_string(common::fixture_dir().join("../synth.toml")).unwrap();
    toml::from_str::<Wrapper>(&text).unwrap().synth
}

#[test]
fn committed_fixture_reloads_as_the_generated_chain() {
    let chain = generate_chain(&fixture_synth()).unwrap();
    let f = common::fixture_dir();
    let raw = io::load_transactions(&f.join(dataset::TRANSACTIONS), None).unwrap();
    let mempool = io::load_mempool(&f.join(dataset::MEMPOOL)).unwrap();
    let labels = io::load_labels(&f.join(dataset::LABELS)).unwrap();
    let txs = apply_labels(&label_visibility(&raw, &mempool, TieRule::Inclusive), &labels).unwrap();
    assert_eq!(txs, chain.txs);
    assert_eq!(labels, chain.labels);
    let forks = io::load_forks(&f.join(dataset::FORKS)).unwrap();
    assert_eq!(forks.0.into_iter().collect::<Vec<_>>(), chain.truth.fork_blocks);
}

#[test]
fn same_seed_writes_identical_files() {
    let cfg = SynthConfig {
        n_blocks: 300,
        n_addresses: 100,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    dataset::write_dataset(&cfg, a.path()).unwrap();
    dataset::write_dataset(&cfg, b.path()).unwrap();
    assert_eq!(common::tree(a.path(), true), common::tree(b.path(), true));

    let c = tempfile::tempdir().unwrap();
    dataset::write_dataset(
        &SynthConfig {
            seed: cfg.seed + 1,
            ..cfg
        },
        c.path(),
    )
    .unwrap();
    assert_ne!(common::tree(a.path(), true), common::tree(c.path(), true));
}

fn run_dataset(cfg: &SynthConfig) -> (tempfile::TempDir, Pipeline) {
    let dir = tempfile::tempdir().unwrap();
    dataset::write_dataset(cfg, dir.path()).unwrap();
    let mut run = RunConfig::from_file(&dir.path().join(dataset::RUN_CONFIG)).unwrap();
    run.threads = Some(4);
    let p = Pipeline::new(run).unwrap();
    p.run_all().unwrap();
    (dir, p)
}

#[test]
fn zero_sandwich_rate_yields_nothing_to_detect() {
    let cfg = SynthConfig {
        n_blocks: 500,
        n_addresses: 200,
        sandwich_rate: 0.0,
        ..SynthConfig::default()
    };
    let chain = generate_chain(&cfg).unwrap();
    assert!(chain.truth.planted.is_empty());
    assert!(chain.truth.behaviors.is_empty());
    let (_dir, p) = run_dataset(&cfg);
    let det = p.load_detection().unwrap();
    assert!(det.events.is_empty());
    assert_eq!(det.counters.events, 0);
}

#[test]
fn pipeline_recovers_planted_sandwiches() {
    let cfg = SynthConfig {
        seed: 77,
        n_blocks: 800,
        n_addresses: 300,
        ..SynthConfig::default()
    };
    let chain = generate_chain(&cfg).unwrap();
    let (_dir, p) = run_dataset(&cfg);
    let det = p.load_detection().unwrap();
    let found: Vec<PlantedSandwich> = det.events.iter().map(PlantedSandwich::of_event).collect();
    assert_eq!(found, chain.truth.planted);
}

#[test]
fn default_config_end_to_end_within_a_minute() {
    let started = Instant::now();
    let (dir, _) = run_dataset(&SynthConfig::default());
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    assert!(dir.path().join("report/manifest.json").is_file());
}
