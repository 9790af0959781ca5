//! Seeded synthetic chains with planted sandwiches and user trajectories,
//! plus brute-force reference implementations used as test oracles.
//!
//! The oracles here deliberately share no code with `detect` or
//! `analytics`; they only reuse the output types.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    AdoptionRow, AdoptionTable, AdoptionVariant, BehaviorTables, ChurnRow, ChurnTable, IncidenceCurve, OutcomeKind,
};
use crate::detect::{SandwichEvent, VictimRecord};
use crate::enrich::MevLabel;
use crate::ingest::MempoolIndex;
use crate::model::{Address, MevType, TxHash, TxRecord, Usd, Visibility};

pub const BLOCK_TIME_SECS: u64 = 12;
const DAY: u64 = 86_400;
const HOUR: u64 = 3_600;

/// Generator parameters. Rates are probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Blocks in the dataset, sampled without replacement over `span_days`.
    pub n_blocks: u32,
    /// Filler target per block (inclusive). Planted content may exceed it.
    pub txs_per_block: (u32, u32),
    /// Ordinary user addresses with generated trajectories.
    pub n_addresses: u32,
    pub n_attackers: u32,
    /// Probability that a user is ever sandwiched.
    pub sandwich_rate: f64,
    pub max_exposures: u32,
    /// Per sandwich: the attacker adds a victim-labeled tx of its own inside
    /// the region. Per block: a standalone self-sandwich trap.
    pub self_sandwich_rate: f64,
    /// Per sandwich: one or two bystander victims join.
    pub multi_victim_rate: f64,
    /// Victim visibility once the victim routes privately.
    pub private_victim_rate: f64,
    /// After an exposure, the user stays silent for the whole window.
    pub churn_probability: f64,
    /// After an exposure, a public-only user makes a first private tx.
    pub adoption_probability: f64,
    /// A user already routes privately before any exposure.
    pub prior_private_rate: f64,
    /// Per block: unmatched legs and out-of-region victim labels.
    pub distractor_rate: f64,
    pub fork_block_count: u32,
    pub window_days: u32,
    pub span_days: u32,
    pub start_block: u64,
    pub start_timestamp: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_blocks: 6_000,
            txs_per_block: (1, 6),
            n_addresses: 1_500,
            n_attackers: 6,
            sandwich_rate: 0.6,
            max_exposures: 25,
            self_sandwich_rate: 0.05,
            multi_victim_rate: 0.08,
            private_victim_rate: 0.3,
            churn_probability: 0.07,
            adoption_probability: 0.25,
            prior_private_rate: 0.1,
            distractor_rate: 0.05,
            fork_block_count: 6,
            window_days: 60,
            span_days: 150,
            start_block: 21_089_069,
            start_timestamp: 1_730_419_200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InfeasibleConfig(m.to_string()));
        let rates = [
            ("sandwich_rate", self.sandwich_rate),
            ("self_sandwich_rate", self.self_sandwich_rate),
            ("multi_victim_rate", self.multi_victim_rate),
            ("private_victim_rate", self.private_victim_rate),
            ("churn_probability", self.churn_probability),
            ("adoption_probability", self.adoption_probability),
            ("prior_private_rate", self.prior_private_rate),
            ("distractor_rate", self.distractor_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::InfeasibleConfig(alloc::format!(
                    "{name} = {r} is outside [0, 1]"
                )));
            }
        }
        if self.n_blocks == 0 || self.n_addresses == 0 || self.window_days == 0 || self.span_days == 0 {
            return bad("n_blocks, n_addresses, window_days and span_days must be positive");
        }
        if self.txs_per_block.0 > self.txs_per_block.1 {
            return bad("txs_per_block range is empty");
        }
        let wants_sandwiches = self.sandwich_rate > 0.0 || self.self_sandwich_rate > 0.0 || self.distractor_rate > 0.0;
        if wants_sandwiches && self.txs_per_block.1 < 3 {
            return bad("txs_per_block upper bound below 3 cannot host a frontrun/victim/backrun triple");
        }
        if wants_sandwiches && self.n_attackers == 0 {
            return bad("sandwiches requested without attackers");
        }
        if self.max_exposures == 0 && self.sandwich_rate > 0.0 {
            return bad("max_exposures must be positive when sandwich_rate > 0");
        }
        if (self.span_days as u64 * DAY / BLOCK_TIME_SECS) < self.n_blocks as u64 {
            return bad("span_days too short for n_blocks distinct blocks");
        }
        if self.fork_block_count > self.n_blocks {
            return bad("fork_block_count exceeds n_blocks");
        }
        Ok(())
    }
}

/// A sandwich as planted by the generator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedSandwich {
    pub block_number: u64,
    pub attacker: Address,
    pub frontrun_index: u32,
    pub backrun_index: u32,
    pub victims: Vec<TxHash>,
    pub any_private_victim: bool,
}

impl PlantedSandwich {
    pub fn of_event(e: &SandwichEvent) -> Self {
        PlantedSandwich {
            block_number: e.block_number,
            attacker: e.attacker,
            frontrun_index: e.frontrun_index,
            backrun_index: e.backrun_index,
            victims: e.victims.iter().map(|v| v.tx_hash).collect(),
            any_private_victim: e.any_private_victim,
        }
    }
}

/// What a user's first public sandwich was followed by, per the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntendedBehavior {
    pub address: Address,
    pub first_exposure_ts: u64,
    /// Day bucket of the next transaction, when within the window.
    pub reactivation_day: Option<u32>,
    pub prior_private: bool,
    /// Day bucket of the first-ever private transaction, when within the window.
    pub adoption_day: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: Vec<PlantedSandwich>,
    pub behaviors: Vec<IntendedBehavior>,
    pub fork_blocks: Vec<u64>,
    pub distractor_counts: BTreeMap<String, u64>,
}

/// Everything one generator run emits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthChain {
    pub txs: Vec<TxRecord>,
    pub labels: Vec<MevLabel>,
    pub mempool: MempoolIndex,
    pub truth: GroundTruth,
}

impl SynthChain {
    pub fn dataset_end_ts(&self) -> u64 {
        self.txs.iter().map(|t| t.timestamp).max().unwrap_or(0)
    }
}

/// Edge cases the generators plant around real sandwiches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distractor {
    /// Attacker's own victim-labeled tx inside a real region.
    SelfVictimInRegion,
    /// Frontrun, victim-labeled tx and backrun all from one sender.
    SelfSandwich,
    /// Frontrun with no later backrun from its sender.
    UnmatchedFrontrun,
    /// Backrun with no earlier frontrun from its sender.
    OrphanBackrun,
    /// Victim-labeled tx outside any frontrun/backrun region.
    VictimOutsideRegion,
    /// Same victim transaction listed twice in one region.
    DuplicateVictim,
    /// Two frontruns from one sender before its backruns.
    NestedFrontruns,
    /// Backrun from a different sender than the frontrun.
    ForeignBackrun,
    /// A later backrun that first-match pairing must not reach.
    SecondBackrun,
}

impl Distractor {
    /// Bumped whenever the catalogue changes.
    pub const CATALOGUE_VERSION: u32 = 1;

    pub const ALL: [Distractor; 9] = [
        Distractor::SelfVictimInRegion,
        Distractor::SelfSandwich,
        Distractor::UnmatchedFrontrun,
        Distractor::OrphanBackrun,
        Distractor::VictimOutsideRegion,
        Distractor::DuplicateVictim,
        Distractor::NestedFrontruns,
        Distractor::ForeignBackrun,
        Distractor::SecondBackrun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Distractor::SelfVictimInRegion => "self_victim_in_region",
            Distractor::SelfSandwich => "self_sandwich",
            Distractor::UnmatchedFrontrun => "unmatched_frontrun",
            Distractor::OrphanBackrun => "orphan_backrun",
            Distractor::VictimOutsideRegion => "victim_outside_region",
            Distractor::DuplicateVictim => "duplicate_victim",
            Distractor::NestedFrontruns => "nested_frontruns",
            Distractor::ForeignBackrun => "foreign_backrun",
            Distractor::SecondBackrun => "second_backrun",
        }
    }
}

fn random_address(rng: &mut ChaCha8Rng) -> Address {
    let mut b = [0u8; 20];
    rng.fill_bytes(&mut b);
    Address(b)
}

fn random_hash(rng: &mut ChaCha8Rng) -> TxHash {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    TxHash(b)
}

/// Index drawn with weight `1 / (k + 1)^2.5`, so rank 0 dominates.
fn heavy_pick(rng: &mut ChaCha8Rng, len: usize) -> usize {
    let weights: Vec<f64> = (0..len).map(|k| 1.0 / libm::pow(k as f64 + 1.0, 2.5)).collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if x < *w {
            return k;
        }
        x -= w;
    }
    len - 1
}

/// Log-uniform cents between 10^lo and 10^hi dollars.
fn random_usd(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Usd {
    let dollars = libm::pow(10.0, lo + rng.random::<f64>() * (hi - lo));
    Usd::new((dollars * 100.0) as i64, 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ItemKind {
    Plain(Visibility),
    Victim(Visibility),
}

#[derive(Debug, Clone, Copy)]
struct Item {
    t: u64,
    user: u32,
    seq: u32,
    kind: ItemKind,
}

/// Plans one user's activity as offsets (seconds) from the span start.
fn plan_user(rng: &mut ChaCha8Rng, cfg: &SynthConfig, user: u32, out: &mut Vec<Item>) {
    let span = cfg.span_days as u64 * DAY;
    let window = cfg.window_days as u64 * DAY;
    let mut seq = 0u32;
    let mut push = |out: &mut Vec<Item>, t: u64, kind: ItemKind| -> bool {
        if t > span {
            return false;
        }
        out.push(Item { t, user, seq, kind });
        seq += 1;
        true
    };

    let mut t = rng.random_range(0..=span * 35 / 100);
    let mut adopted = rng.random_bool(cfg.prior_private_rate);
    let pre = rng.random_range(0..=3u32);
    for k in 0..pre {
        let vis = if adopted && k == 0 {
            Visibility::Private
        } else {
            Visibility::Public
        };
        if !push(out, t, ItemKind::Plain(vis)) {
            return;
        }
        t += rng.random_range(10 * 60..=3 * DAY);
    }
    if adopted && pre == 0 && !push(out, t, ItemKind::Plain(Visibility::Private)) {
        return;
    }

    let mut exposures = 0;
    if cfg.sandwich_rate > 0.0 && rng.random_bool(cfg.sandwich_rate) {
        exposures = 1;
        while exposures < cfg.max_exposures && rng.random_bool(0.6) {
            exposures += 1;
        }
    }

    let plain_vis = |rng: &mut ChaCha8Rng, adopted: bool| {
        if adopted && rng.random_bool(0.6) {
            Visibility::Private
        } else {
            Visibility::Public
        }
    };

    for _ in 0..exposures {
        t += rng.random_range(5 * 60..=4 * DAY);
        let vis = if adopted && rng.random_bool(cfg.private_victim_rate) {
            Visibility::Private
        } else {
            Visibility::Public
        };
        if !push(out, t, ItemKind::Victim(vis)) {
            return;
        }
        if rng.random_bool(cfg.churn_probability) {
            t += window + rng.random_range(DAY..=20 * DAY);
            let v = plain_vis(rng, adopted);
            if !push(out, t, ItemKind::Plain(v)) {
                return;
            }
            continue;
        }
        let gap = if rng.random_bool(0.5) {
            rng.random_range(30..=6 * HOUR)
        } else {
            rng.random_range(6 * HOUR..=window)
        };
        let adopt_now = !adopted && cfg.adoption_probability > 0.0 && rng.random_bool(cfg.adoption_probability);
        if adopt_now {
            let adopt_gap = rng.random_range(gap..=window);
            if adopt_gap == gap {
                if !push(out, t + gap, ItemKind::Plain(Visibility::Private)) {
                    return;
                }
            } else {
                if !push(out, t + gap, ItemKind::Plain(Visibility::Public)) {
                    return;
                }
                if !push(out, t + adopt_gap, ItemKind::Plain(Visibility::Private)) {
                    return;
                }
            }
            adopted = true;
            t += adopt_gap;
        } else {
            let v = plain_vis(rng, adopted);
            if !push(out, t + gap, ItemKind::Plain(v)) {
                return;
            }
            t += gap;
        }
    }

    let trailing = rng.random_range(0..=3u32);
    for _ in 0..trailing {
        t += rng.random_range(HOUR..=10 * DAY);
        let v = plain_vis(rng, adopted);
        if !push(out, t, ItemKind::Plain(v)) {
            return;
        }
    }
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    cfg: &'a SynthConfig,
    attackers: Vec<Address>,
    noise: Vec<Address>,
    routers: Vec<Address>,
    txs: Vec<TxRecord>,
    planted: Vec<PlantedSandwich>,
    distractors: BTreeMap<String, u64>,
    // per block under construction
    block_number: u64,
    timestamp: u64,
    start: usize,
}

impl Builder<'_> {
    fn emit(&mut self, sender: Address, mev: MevType, vis: Visibility) -> usize {
        let hash = random_hash(&mut self.rng);
        let idx = (self.txs.len() - self.start) as u32;
        let mut tx = TxRecord::new(self.block_number, idx, self.timestamp, hash, sender);
        tx.mev_type = mev;
        tx.visibility = vis;
        match mev {
            MevType::SandwichVictim | MevType::Swap => {
                let r = heavy_pick(&mut self.rng, self.routers.len());
                tx.destination = Some(self.routers[r]);
                tx.protocol = Some(
                    if self.rng.random_bool(0.5) {
                        "uniswap2"
                    } else {
                        "uniswap3"
                    }
                    .to_string(),
                );
                tx.swap_volume_usd = Some(random_usd(&mut self.rng, 1.0, 5.0));
                tx.swap_count = Some(self.rng.random_range(1..=3));
                if mev == MevType::SandwichVictim && !self.rng.random_bool(0.05) {
                    tx.user_loss_usd = Some(random_usd(&mut self.rng, -0.5, 3.4));
                }
            }
            MevType::Frontrun | MevType::Backrun => {
                tx.destination = Some(self.routers[0]);
                tx.protocol = Some("uniswap2".to_string());
                if !self.rng.random_bool(0.05) {
                    tx.extractor_profit_usd = Some(random_usd(&mut self.rng, -0.5, 3.0));
                }
            }
            _ => {
                if !self.rng.random_bool(0.02) {
                    tx.destination = Some(random_address(&mut self.rng));
                }
            }
        }
        self.txs.push(tx);
        self.txs.len() - 1
    }

    fn filler(&mut self) {
        let s = self.noise[self.rng.random_range(0..self.noise.len())];
        let mev = if self.rng.random_bool(0.3) {
            MevType::Swap
        } else {
            MevType::NoneLabel
        };
        let vis = if self.rng.random_bool(0.35) {
            Visibility::Private
        } else {
            Visibility::Public
        };
        self.emit(s, mev, vis);
    }

    fn attacker(&mut self) -> Address {
        let k = heavy_pick(&mut self.rng, self.attackers.len());
        self.attackers[k]
    }

    fn leg_vis(&mut self) -> Visibility {
        if self.rng.random_bool(0.01) {
            Visibility::Public
        } else {
            Visibility::Private
        }
    }

    fn note(&mut self, d: Distractor) {
        *self.distractors.entry(d.name().to_string()).or_default() += 1;
    }

    /// Frontrun, victims, backrun. Returns the user's victim tx position.
    fn sandwich(&mut self, user: Address, vis: Visibility) -> usize {
        let a = self.attacker();
        let lv = self.leg_vis();
        let f = self.emit(a, MevType::Frontrun, lv);
        if self.rng.random_bool(0.2) {
            self.filler();
        }
        if self.rng.random_bool(self.cfg.self_sandwich_rate) {
            self.emit(a, MevType::SandwichVictim, lv);
            self.note(Distractor::SelfVictimInRegion);
        }
        let mut victims = Vec::new();
        let v = self.emit(user, MevType::SandwichVictim, vis);
        victims.push(v);
        if self.rng.random_bool(self.cfg.multi_victim_rate) {
            for _ in 0..self.rng.random_range(1..=2) {
                let s = self.noise[self.rng.random_range(0..self.noise.len())];
                let bvis = if self.rng.random_bool(self.cfg.private_victim_rate) {
                    Visibility::Private
                } else {
                    Visibility::Public
                };
                victims.push(self.emit(s, MevType::SandwichVictim, bvis));
            }
        }
        if self.rng.random_bool(0.2) {
            self.filler();
        }
        let lv = self.leg_vis();
        let b = self.emit(a, MevType::Backrun, lv);
        self.planted.push(PlantedSandwich {
            block_number: self.block_number,
            attacker: a,
            frontrun_index: self.txs[f].tx_index,
            backrun_index: self.txs[b].tx_index,
            victims: victims.iter().map(|&p| self.txs[p].tx_hash).collect(),
            any_private_victim: victims.iter().any(|&p| self.txs[p].visibility.is_private()),
        });
        v
    }
}

/// Generates a chain, its provider labels, a mempool index and the planted
/// ground truth. Deterministic in `cfg.seed`.
pub fn generate_chain(cfg: &SynthConfig) -> Result<SynthChain, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let span_slots = cfg.span_days as u64 * DAY / BLOCK_TIME_SECS;
    let mut slots: Vec<u64> = if (span_slots as usize) < 2 * cfg.n_blocks as usize {
        rand::seq::index::sample(&mut rng, span_slots as usize, cfg.n_blocks as usize)
            .into_iter()
            .map(|s| s as u64)
            .collect()
    } else {
        let mut set = BTreeSet::new();
        while set.len() < cfg.n_blocks as usize {
            set.insert(rng.random_range(0..span_slots));
        }
        set.into_iter().collect()
    };
    slots.sort_unstable();

    let users: Vec<Address> = (0..cfg.n_addresses).map(|_| random_address(&mut rng)).collect();
    let attackers: Vec<Address> = (0..cfg.n_attackers.max(1)).map(|_| random_address(&mut rng)).collect();
    let noise: Vec<Address> = (0..(cfg.n_addresses / 4).max(8))
        .map(|_| random_address(&mut rng))
        .collect();
    let routers: Vec<Address> = (0..8).map(|_| random_address(&mut rng)).collect();

    let mut items = Vec::new();
    for u in 0..cfg.n_addresses {
        plan_user(&mut rng, cfg, u, &mut items);
    }
    // snap each planned time to the nearest dataset block
    let mut per_block: Vec<Vec<Item>> = alloc::vec![Vec::new(); slots.len()];
    for it in items {
        let slot = it.t / BLOCK_TIME_SECS;
        let k = slots.partition_point(|&s| s < slot);
        let k = if k == slots.len() || (k > 0 && slot - slots[k - 1] <= slots[k] - slot) {
            k - 1
        } else {
            k
        };
        per_block[k].push(it);
    }

    let mut b = Builder {
        rng,
        cfg,
        attackers,
        noise,
        routers,
        txs: Vec::new(),
        planted: Vec::new(),
        distractors: BTreeMap::new(),
        block_number: 0,
        timestamp: 0,
        start: 0,
    };
    // realized (position) of each user's items, for ground truth
    let mut user_txs: BTreeMap<u32, Vec<(u32, usize, bool)>> = BTreeMap::new();

    for (k, slot) in slots.iter().enumerate() {
        b.block_number = cfg.start_block + slot;
        b.timestamp = cfg.start_timestamp + slot * BLOCK_TIME_SECS;
        b.start = b.txs.len();
        let mut block_items = core::mem::take(&mut per_block[k]);
        block_items.sort_by_key(|i| (i.t, i.user, i.seq));

        if b.rng.random_bool(cfg.distractor_rate) {
            let a = b.attacker();
            let lv = b.leg_vis();
            b.emit(a, MevType::Backrun, lv);
            b.note(Distractor::OrphanBackrun);
        }
        if b.rng.random_bool(cfg.distractor_rate) {
            let s = b.noise[b.rng.random_range(0..b.noise.len())];
            b.emit(s, MevType::SandwichVictim, Visibility::Public);
            b.note(Distractor::VictimOutsideRegion);
        }
        for it in &block_items {
            if b.rng.random_bool(0.3) {
                b.filler();
            }
            let user = users[it.user as usize];
            let (pos, victim) = match it.kind {
                ItemKind::Plain(vis) => {
                    let mev = if b.rng.random_bool(0.5) {
                        MevType::Swap
                    } else {
                        MevType::NoneLabel
                    };
                    (b.emit(user, mev, vis), false)
                }
                ItemKind::Victim(vis) => (b.sandwich(user, vis), true),
            };
            user_txs.entry(it.user).or_default().push((it.seq, pos, victim));
        }
        if b.rng.random_bool(cfg.self_sandwich_rate) {
            let a = b.attacker();
            let lv = b.leg_vis();
            b.emit(a, MevType::Frontrun, lv);
            b.emit(a, MevType::SandwichVictim, lv);
            b.emit(a, MevType::Backrun, lv);
            b.note(Distractor::SelfSandwich);
        }
        let target = b.rng.random_range(cfg.txs_per_block.0..=cfg.txs_per_block.1) as usize;
        while b.txs.len() - b.start < target {
            b.filler();
        }
        if b.rng.random_bool(cfg.distractor_rate) {
            let a = b.attacker();
            let lv = b.leg_vis();
            b.emit(a, MevType::Frontrun, lv);
            b.note(Distractor::UnmatchedFrontrun);
        }
    }

    let Builder {
        mut rng,
        txs,
        planted,
        distractors,
        ..
    } = b;

    let window = cfg.window_days as u64 * DAY;
    let mut behaviors = Vec::new();
    for (u, list) in &user_txs {
        let mut list = list.clone();
        list.sort_by_key(|&(seq, _, _)| seq);
        let Some(anchor_k) = list
            .iter()
            .position(|&(_, p, victim)| victim && txs[p].visibility == Visibility::Public)
        else {
            continue;
        };
        let anchor = &txs[list[anchor_k].1];
        let within = |ts: u64| {
            let d = ts - anchor.timestamp;
            (d <= window).then_some((d / DAY) as u32)
        };
        let reactivation_day = list.get(anchor_k + 1).and_then(|&(_, p, _)| within(txs[p].timestamp));
        let first_private = list.iter().position(|&(_, p, _)| txs[p].visibility.is_private());
        let (prior_private, adoption_day) = match first_private {
            Some(k) if k < anchor_k => (true, None),
            Some(k) => (false, within(txs[list[k].1].timestamp)),
            None => (false, None),
        };
        behaviors.push(IntendedBehavior {
            address: users[*u as usize],
            first_exposure_ts: anchor.timestamp,
            reactivation_day,
            prior_private,
            adoption_day,
        });
    }
    behaviors.sort_by_key(|b| b.address);

    let mut fork_blocks = BTreeSet::new();
    let private_blocks: Vec<u64> = planted
        .iter()
        .filter(|p| p.any_private_victim)
        .map(|p| p.block_number)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let all_blocks: Vec<u64> = slots.iter().map(|s| cfg.start_block + s).collect();
    let from_private = (cfg.fork_block_count as usize / 2).min(private_blocks.len());
    while fork_blocks.len() < from_private {
        fork_blocks.insert(private_blocks[rng.random_range(0..private_blocks.len())]);
    }
    while fork_blocks.len() < cfg.fork_block_count as usize {
        fork_blocks.insert(all_blocks[rng.random_range(0..all_blocks.len())]);
    }

    let mut mempool = MempoolIndex::new();
    for tx in &txs {
        match tx.visibility {
            Visibility::Public => {
                let lead = if rng.random_bool(0.2) {
                    0
                } else {
                    rng.random_range(1..=30)
                };
                mempool.observe(tx.tx_hash, tx.timestamp - lead);
            }
            Visibility::Private => {
                if rng.random_bool(0.1) {
                    mempool.observe(tx.tx_hash, tx.timestamp + rng.random_range(1..=600));
                }
            }
        }
    }

    let labels = txs.iter().filter_map(MevLabel::from_record).collect();

    Ok(SynthChain {
        txs,
        labels,
        mempool,
        truth: GroundTruth {
            planted,
            behaviors,
            fork_blocks: fork_blocks.into_iter().collect(),
            distractor_counts: distractors,
        },
    })
}

/// A short adversarial block mixing planted sandwiches with every catalogue
/// distractor over a tiny sender pool, so patterns interact. Unlike chain
/// generation this may contain duplicate hashes.
pub fn adversarial_block(rng: &mut ChaCha8Rng, block_number: u64, max_txs: usize) -> (Vec<TxRecord>, Vec<Distractor>) {
    let senders: Vec<Address> = (1..=4u8).map(|k| Address([k; 20])).collect();
    let mut raw: Vec<(Address, MevType, Visibility, Option<TxHash>)> = Vec::new();
    let mut used = Vec::new();
    let pick = |rng: &mut ChaCha8Rng| senders[rng.random_range(0..senders.len())];
    let vis = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.4) {
            Visibility::Private
        } else {
            Visibility::Public
        }
    };
    let target = rng.random_range(3..=max_txs.max(3));
    while raw.len() < target {
        let a = pick(rng);
        let mut v = pick(rng);
        if v == a {
            v = senders[(senders.iter().position(|s| *s == a).unwrap() + 1) % senders.len()];
        }
        match rng.random_range(0..12u32) {
            0 | 1 => {
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            2 => {
                used.push(Distractor::SelfVictimInRegion);
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((a, MevType::SandwichVictim, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            3 => {
                used.push(Distractor::SelfSandwich);
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((a, MevType::SandwichVictim, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            4 => {
                used.push(Distractor::UnmatchedFrontrun);
                raw.push((a, MevType::Frontrun, vis(rng), None));
            }
            5 => {
                used.push(Distractor::OrphanBackrun);
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            6 => {
                used.push(Distractor::VictimOutsideRegion);
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
            }
            7 => {
                used.push(Distractor::DuplicateVictim);
                let h = random_hash(rng);
                let vv = vis(rng);
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vv, Some(h)));
                raw.push((v, MevType::SandwichVictim, vv, Some(h)));
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            8 => {
                used.push(Distractor::NestedFrontruns);
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            9 => {
                used.push(Distractor::ForeignBackrun);
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
                raw.push((v, MevType::Backrun, vis(rng), None));
            }
            10 => {
                used.push(Distractor::SecondBackrun);
                raw.push((a, MevType::Frontrun, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
                raw.push((v, MevType::SandwichVictim, vis(rng), None));
                raw.push((a, MevType::Backrun, vis(rng), None));
            }
            _ => {
                let mev = [
                    MevType::Swap,
                    MevType::NoneLabel,
                    MevType::Arbitrage,
                    MevType::SandwichVictim,
                ][rng.random_range(0..4)];
                raw.push((pick(rng), mev, vis(rng), None));
            }
        }
    }
    raw.truncate(max_txs.max(3));
    let txs = raw
        .into_iter()
        .enumerate()
        .map(|(i, (s, mev, v, h))| {
            let mut t = TxRecord::new(
                block_number,
                i as u32,
                block_number * BLOCK_TIME_SECS,
                h.unwrap_or_else(|| random_hash(rng)),
                s,
            );
            t.mev_type = mev;
            t.visibility = v;
            if mev == MevType::SandwichVictim && rng.random_bool(0.8) {
                t.user_loss_usd = Some(random_usd(rng, 0.0, 3.0));
            }
            if matches!(mev, MevType::Frontrun | MevType::Backrun) && rng.random_bool(0.8) {
                t.extractor_profit_usd = Some(random_usd(rng, 0.0, 3.0));
            }
            if mev == MevType::SandwichVictim && rng.random_bool(0.7) {
                t.destination = Some(Address([0xd0; 20]));
            }
            t
        })
        .collect();
    used.sort();
    used.dedup();
    (txs, used)
}

/// Exhaustive reference detector for one block.
///
/// Enumerates every `(i, j)` pair with a frontrun at `i`, a backrun at `j`
/// from the same sender and no same-sender backrun strictly between; then
/// walks frontruns in order, refusing backruns already used by a confirmed
/// pair.
#[allow(clippy::needless_range_loop)] // index pairs are the point here
pub fn oracle_detect(block_txs: &[TxRecord]) -> Vec<SandwichEvent> {
    let n = block_txs.len();
    let is_back_of = |k: usize, s: &Address| block_txs[k].mev_type == MevType::Backrun && block_txs[k].sender == *s;

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        if block_txs[i].mev_type != MevType::Frontrun {
            continue;
        }
        let s = block_txs[i].sender;
        for j in i + 1..n {
            if is_back_of(j, &s) && !(i + 1..j).any(|m| is_back_of(m, &s)) {
                pairs.push((i, j));
            }
        }
    }

    let mut used_backruns: BTreeSet<usize> = BTreeSet::new();
    let mut events = Vec::new();
    for (i, j) in pairs {
        if used_backruns.contains(&j) {
            continue;
        }
        let front = &block_txs[i];
        let back = &block_txs[j];
        let mut hashes: BTreeSet<TxHash> = BTreeSet::new();
        let mut victims = Vec::new();
        for m in i + 1..j {
            let t = &block_txs[m];
            let ok = t.mev_type == MevType::SandwichVictim && t.sender != front.sender;
            if ok && hashes.insert(t.tx_hash) {
                victims.push(VictimRecord {
                    tx_hash: t.tx_hash,
                    tx_index: t.tx_index,
                    sender: t.sender,
                    visibility: t.visibility,
                    user_loss_usd: t.user_loss_usd,
                    destination: t.destination,
                });
            }
        }
        if victims.is_empty() {
            continue;
        }
        used_backruns.insert(j);
        let mut loss = Usd::ZERO;
        let mut loss_missing = false;
        for v in &victims {
            match v.user_loss_usd {
                Some(x) => loss += x,
                None => loss_missing = true,
            }
        }
        let mut profit = Usd::ZERO;
        let mut profit_missing = false;
        for leg in [front, back] {
            match leg.extractor_profit_usd {
                Some(x) => profit += x,
                None => profit_missing = true,
            }
        }
        let any_private = victims.iter().any(|v| v.visibility == Visibility::Private);
        events.push(SandwichEvent {
            block_number: front.block_number,
            attacker: front.sender,
            frontrun_index: front.tx_index,
            backrun_index: back.tx_index,
            frontrun_hash: front.tx_hash,
            backrun_hash: back.tx_hash,
            victims,
            any_private_victim: any_private,
            total_victim_loss_usd: loss,
            attacker_profit_usd: profit,
            loss_missing,
            profit_missing,
        });
    }
    events
}

/// Direct per-address recount of churn, adoption and incidence curves.
pub fn oracle_behavior(
    txs: &[TxRecord],
    events: &[SandwichEvent],
    window_days: u32,
    n_max: u32,
    dataset_end_ts: u64,
) -> BehaviorTables {
    type Key = (u64, u64, u32);
    let window = window_days as u64 * DAY;

    let mut victim_vis: BTreeMap<TxHash, Visibility> = BTreeMap::new();
    for e in events {
        for v in &e.victims {
            victim_vis.entry(v.tx_hash).or_insert(v.visibility);
        }
    }

    // address -> every (key, visibility), and its public victim keys
    let mut acts: BTreeMap<Address, Vec<(Key, Visibility)>> = BTreeMap::new();
    let mut public_hits: BTreeMap<Address, Vec<Key>> = BTreeMap::new();
    for t in txs {
        let key = (t.timestamp, t.block_number, t.tx_index);
        acts.entry(t.sender).or_default().push((key, t.visibility));
        if victim_vis.get(&t.tx_hash) == Some(&Visibility::Public) && t.visibility == Visibility::Public {
            public_hits.entry(t.sender).or_default().push(key);
        }
    }
    for list in acts.values_mut() {
        list.sort();
    }
    for list in public_hits.values_mut() {
        list.sort();
    }

    let day_of = |from: u64, to: u64| -> Option<u32> {
        let d = to - from;
        if d <= window {
            Some((d / DAY) as u32)
        } else {
            None
        }
    };
    let recount = |days: &[Option<u32>]| -> Vec<u64> {
        (0..=window_days)
            .map(|t| days.iter().filter(|d| matches!(d, Some(x) if *x <= t)).count() as u64)
            .collect()
    };

    let mut out = BehaviorTables {
        churn: ChurnTable {
            window_days,
            rows: Vec::new(),
        },
        adoption_all: AdoptionTable {
            variant: AdoptionVariant::All,
            rows: Vec::new(),
        },
        adoption_reactivated: AdoptionTable {
            variant: AdoptionVariant::ReactivatedOnly,
            rows: Vec::new(),
        },
        reactivation_curves: Vec::new(),
        adoption_curves_all: Vec::new(),
        adoption_curves_reactivated: Vec::new(),
    };

    for n in 1..=n_max {
        let mut react_days: Vec<Option<u32>> = Vec::new();
        let mut adopt_all: Vec<Option<u32>> = Vec::new();
        let mut adopt_react: Vec<Option<u32>> = Vec::new();
        let mut excluded = 0u64;
        for (addr, hits) in &public_hits {
            if hits.len() < n as usize {
                continue;
            }
            let anchor = hits[n as usize - 1];
            if anchor.0 + window > dataset_end_ts {
                continue;
            }
            let list = &acts[addr];
            let mut next_after = None;
            for (k, _) in list {
                if *k > anchor {
                    next_after = Some(k.0);
                    break;
                }
            }
            let react = next_after.and_then(|ts| day_of(anchor.0, ts));
            react_days.push(react);

            let mut first_private = None;
            for (k, v) in list {
                if *v == Visibility::Private {
                    first_private = Some(*k);
                    break;
                }
            }
            match first_private {
                Some(k) if k < anchor => excluded += 1,
                other => {
                    let adopt = other.and_then(|k| day_of(anchor.0, k.0));
                    adopt_all.push(adopt);
                    if react.is_some() {
                        adopt_react.push(adopt);
                    }
                }
            }
        }

        let reactivated = react_days.iter().filter(|d| d.is_some()).count() as u64;
        out.churn.rows.push(ChurnRow {
            n,
            cohort_size: react_days.len() as u64,
            reactivated_count: reactivated,
        });
        out.reactivation_curves.push(IncidenceCurve {
            kind: OutcomeKind::Reactivation,
            variant: None,
            n,
            population: react_days.len() as u64,
            cumulative: recount(&react_days),
        });
        for (days, variant) in [
            (&adopt_all, AdoptionVariant::All),
            (&adopt_react, AdoptionVariant::ReactivatedOnly),
        ] {
            let switched = days.iter().filter(|d| d.is_some()).count() as u64;
            let row = AdoptionRow {
                n,
                population: days.len() as u64,
                switched_count: switched,
                excluded_prior_private: excluded,
            };
            let curve = IncidenceCurve {
                kind: OutcomeKind::PrivateAdoption,
                variant: Some(variant),
                n,
                population: days.len() as u64,
                cumulative: recount(days),
            };
            match variant {
                AdoptionVariant::All => {
                    out.adoption_all.rows.push(row);
                    out.adoption_curves_all.push(curve);
                }
                AdoptionVariant::ReactivatedOnly => {
                    out.adoption_reactivated.rows.push(row);
                    out.adoption_curves_reactivated.push(curve);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthConfig {
        SynthConfig {
            n_blocks: 300,
            n_addresses: 80,
            span_days: 100,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_chain(&tiny()).unwrap();
        let b = generate_chain(&tiny()).unwrap();
        assert_eq!(a, b);
        let c = generate_chain(&SynthConfig { seed: 7, ..tiny() }).unwrap();
        assert_ne!(a.txs, c.txs);
    }

    #[test]
    fn zero_sandwich_rate_plants_nothing() {
        let cfg = SynthConfig {
            sandwich_rate: 0.0,
            self_sandwich_rate: 0.0,
            distractor_rate: 0.0,
            fork_block_count: 0,
            ..tiny()
        };
        let chain = generate_chain(&cfg).unwrap();
        assert!(chain.truth.planted.is_empty());
    }

    #[test]
    fn infeasible_configs() {
        let narrow = SynthConfig {
            txs_per_block: (1, 2),
            ..tiny()
        };
        assert!(matches!(generate_chain(&narrow), Err(SynthError::InfeasibleConfig(_))));
        let rate = SynthConfig {
            churn_probability: 1.5,
            ..tiny()
        };
        assert!(rate.validate().is_err());
        let crowded = SynthConfig {
            n_blocks: 10_000,
            span_days: 1,
            ..tiny()
        };
        assert!(crowded.validate().is_err());
    }

    #[test]
    fn planted_events_satisfy_event_shape() {
        let chain = generate_chain(&tiny()).unwrap();
        assert!(!chain.truth.planted.is_empty());
        for p in &chain.truth.planted {
            assert!(p.frontrun_index < p.backrun_index);
            assert!(!p.victims.is_empty());
        }
        assert!(crate::ingest::is_canonical(&chain.txs));
    }

    #[test]
    fn oracle_minimal_cases() {
        let mk = |legs: &[(u8, MevType)]| -> Vec<TxRecord> {
            legs.iter()
                .enumerate()
                .map(|(i, &(s, m))| {
                    let mut t = TxRecord::new(1, i as u32, 12, TxHash([i as u8 + 1; 32]), Address([s; 20]));
                    t.mev_type = m;
                    t
                })
                .collect()
        };
        use MevType::*;
        assert_eq!(
            oracle_detect(&mk(&[(1, Frontrun), (2, SandwichVictim), (1, Backrun)])).len(),
            1
        );
        assert!(oracle_detect(&mk(&[(1, Frontrun), (1, SandwichVictim), (1, Backrun)])).is_empty());
    }
}
