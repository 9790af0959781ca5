use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sandscope_core::detect::{apply_fork_filter, blocks, detect_all, detect_block, ForkedBlockSet};
use sandscope_core::synth::{
    adversarial_block, generate_chain, oracle_detect, Distractor, PlantedSandwich, SynthConfig,
};

#[test]
fn adversarial_blocks_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut seen = std::collections::BTreeSet::new();
    for b in 0..500u64 {
        let (txs, used) = adversarial_block(&mut rng, 1_000 + b, 40);
        seen.extend(used);
        let got = detect_block(&txs);
        assert_eq!(got, oracle_detect(&txs), "block {b}");
        for e in &got {
            e.check_invariants().unwrap();
        }
    }
    assert_eq!(seen.len(), Distractor::ALL.len());
}

#[test]
fn generated_chain_recovers_planted_events() {
    let cfg = SynthConfig {
        n_blocks: 1_500,
        n_addresses: 400,
        span_days: 120,
        ..SynthConfig::default()
    };
    let chain = generate_chain(&cfg).unwrap();
    let det = detect_all(&chain.txs);
    let found: Vec<PlantedSandwich> = det.events.iter().map(PlantedSandwich::of_event).collect();
    assert_eq!(found, chain.truth.planted);
    for block in blocks(&chain.txs) {
        assert_eq!(detect_block(block), oracle_detect(block));
    }
}

#[test]
fn single_block_single_triple() {
    let cfg = SynthConfig {
        n_blocks: 1,
        n_addresses: 1,
        sandwich_rate: 1.0,
        max_exposures: 1,
        self_sandwich_rate: 0.0,
        multi_victim_rate: 0.0,
        distractor_rate: 0.0,
        prior_private_rate: 0.0,
        fork_block_count: 0,
        ..SynthConfig::default()
    };
    let chain = generate_chain(&cfg).unwrap();
    assert_eq!(chain.truth.planted.len(), 1);
    let det = detect_all(&chain.txs);
    assert_eq!(det.events.len(), 1);
    assert_eq!(PlantedSandwich::of_event(&det.events[0]), chain.truth.planted[0]);
}

#[test]
fn fork_filter_matches_set_intersection() {
    let chain = generate_chain(&SynthConfig {
        n_blocks: 800,
        n_addresses: 200,
        fork_block_count: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    let det = detect_all(&chain.txs);
    let forks: ForkedBlockSet = chain.truth.fork_blocks.iter().copied().collect();
    let out = apply_fork_filter(&det.events, &forks);
    let expected = det
        .events
        .iter()
        .filter(|e| chain.truth.fork_blocks.binary_search(&e.block_number).is_ok())
        .count();
    assert!(expected > 0);
    assert_eq!(out.removed_count as usize, expected);
    let kept: Vec<_> = det
        .events
        .iter()
        .filter(|e| !forks.contains(e.block_number))
        .cloned()
        .collect();
    assert_eq!(out.kept, kept);
}
