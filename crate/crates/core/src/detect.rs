//! Sandwich detection over block-ordered, provider-labeled transactions.
//!
//! Within a block, every frontrun at index `i` sent by `s` is paired with the
//! first later backrun sent by `s`. The transactions strictly between the two
//! legs form the victim region; records there labeled as sandwich victims
//! and sent by someone other than `s` are the candidate victims, counted once
//! per transaction hash. A pair is confirmed when at least one such victim
//! remains.
//!
//! Pairing is one-to-one: a backrun that already closed a confirmed pair is
//! not reused. A later frontrun whose first backrun was consumed that way is
//! left unmatched rather than skipping ahead, so no confirmed region ever
//! contains a backrun of its own attacker.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{sum_present, usd2, Address, MevType, TxHash, TxRecord, Usd, Visibility};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VictimRecord {
    pub tx_hash: TxHash,
    pub tx_index: u32,
    pub sender: Address,
    pub visibility: Visibility,
    #[serde(with = "usd2::option", default)]
    pub user_loss_usd: Option<Usd>,
    #[serde(default)]
    pub destination: Option<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandwichEvent {
    pub block_number: u64,
    pub attacker: Address,
    pub frontrun_index: u32,
    pub backrun_index: u32,
    pub frontrun_hash: TxHash,
    pub backrun_hash: TxHash,
    pub victims: Vec<VictimRecord>,
    pub any_private_victim: bool,
    #[serde(with = "usd2")]
    pub total_victim_loss_usd: Usd,
    #[serde(with = "usd2")]
    pub attacker_profit_usd: Usd,
    /// Some victim had no loss value; it was counted as zero.
    #[serde(default)]
    pub loss_missing: bool,
    /// A leg had no profit value; it was counted as zero.
    #[serde(default)]
    pub profit_missing: bool,
}

impl SandwichEvent {
    pub fn key(&self) -> (u64, u32) {
        (self.block_number, self.frontrun_index)
    }

    pub fn private_victims(&self) -> impl Iterator<Item = &VictimRecord> {
        self.victims.iter().filter(|v| v.visibility.is_private())
    }

    /// Structural invariants every confirmed event satisfies.
    pub fn check_invariants(&self) -> Result<(), &'static str> {
        if self.victims.is_empty() {
            return Err("event without victims");
        }
        if self.frontrun_index >= self.backrun_index {
            return Err("frontrun does not precede backrun");
        }
        for v in &self.victims {
            if v.tx_index <= self.frontrun_index || v.tx_index >= self.backrun_index {
                return Err("victim outside frontrun/backrun region");
            }
            if v.sender == self.attacker {
                return Err("self-sandwich victim");
            }
        }
        let hashes: BTreeSet<_> = self.victims.iter().map(|v| v.tx_hash).collect();
        if hashes.len() != self.victims.len() {
            return Err("duplicate victim");
        }
        if self.any_private_victim != self.victims.iter().any(|v| v.visibility.is_private()) {
            return Err("private flag disagrees with victims");
        }
        Ok(())
    }
}

/// Per-block pairing diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    /// Frontruns whose first same-sender backrun already closed another pair.
    pub consumed_backrun_skips: u64,
}

/// Detection on one block. `block_txs` must be sorted by `tx_index` and
/// belong to a single block.
pub fn detect_block(block_txs: &[TxRecord]) -> Vec<SandwichEvent> {
    detect_block_with_diagnostics(block_txs).0
}

pub fn detect_block_with_diagnostics(block_txs: &[TxRecord]) -> (Vec<SandwichEvent>, BlockDiagnostics) {
    debug_assert!(block_txs.windows(2).all(|w| w[0].block_number == w[1].block_number));
    let mut diag = BlockDiagnostics::default();

    let mut backruns: BTreeMap<Address, Vec<usize>> = BTreeMap::new();
    for (pos, tx) in block_txs.iter().enumerate() {
        if tx.mev_type == MevType::Backrun {
            backruns.entry(tx.sender).or_default().push(pos);
        }
    }
    if backruns.is_empty() {
        return (Vec::new(), diag);
    }

    let mut consumed = alloc::vec![false; block_txs.len()];
    let mut events = Vec::new();
    for (i, front) in block_txs.iter().enumerate() {
        if front.mev_type != MevType::Frontrun {
            continue;
        }
        let Some(candidates) = backruns.get(&front.sender) else {
            continue;
        };
        let next = candidates.partition_point(|&p| p <= i);
        let Some(&j) = candidates.get(next) else {
            continue;
        };
        if consumed[j] {
            diag.consumed_backrun_skips += 1;
            log::debug!(
                "block {}: frontrun at {} shares backrun at {} with an earlier pair",
                front.block_number,
                front.tx_index,
                block_txs[j].tx_index
            );
            continue;
        }

        let mut victims: Vec<VictimRecord> = Vec::new();
        for tx in &block_txs[i + 1..j] {
            if tx.mev_type != MevType::SandwichVictim || tx.sender == front.sender {
                continue;
            }
            if victims.iter().any(|v| v.tx_hash == tx.tx_hash) {
                continue;
            }
            victims.push(VictimRecord {
                tx_hash: tx.tx_hash,
                tx_index: tx.tx_index,
                sender: tx.sender,
                visibility: tx.visibility,
                user_loss_usd: tx.user_loss_usd,
                destination: tx.destination,
            });
        }
        if victims.is_empty() {
            continue;
        }
        consumed[j] = true;
        let back = &block_txs[j];
        events.push(build_event(front, back, victims));
    }
    (events, diag)
}

/// Assembles an event from its legs and confirmed victims, aggregating
/// money fields (absent values count as zero and raise the missing flags).
pub fn build_event(front: &TxRecord, back: &TxRecord, victims: Vec<VictimRecord>) -> SandwichEvent {
    let (loss, loss_missing) = sum_present(victims.iter().map(|v| v.user_loss_usd));
    let (profit, profit_missing) = sum_present([front.extractor_profit_usd, back.extractor_profit_usd]);
    SandwichEvent {
        block_number: front.block_number,
        attacker: front.sender,
        frontrun_index: front.tx_index,
        backrun_index: back.tx_index,
        frontrun_hash: front.tx_hash,
        backrun_hash: back.tx_hash,
        any_private_victim: victims.iter().any(|v| v.visibility.is_private()),
        victims,
        total_victim_loss_usd: loss,
        attacker_profit_usd: profit,
        loss_missing: loss_missing > 0,
        profit_missing: profit_missing > 0,
    }
}

/// Contiguous per-block slices of a canonical-sorted dataset.
pub fn blocks(txs: &[TxRecord]) -> impl Iterator<Item = &[TxRecord]> {
    txs.chunk_by(|a, b| a.block_number == b.block_number)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounters {
    pub events: u64,
    /// Events with only public victims.
    pub public_attacks: u64,
    /// Events with at least one private victim.
    pub private_attacks: u64,
    /// Distinct public victim transactions across all events.
    pub public_victims: u64,
    /// Distinct private victim transactions across all events.
    pub private_victims: u64,
    pub consumed_backrun_skips: u64,
}

impl DetectionCounters {
    pub fn tally(events: &[SandwichEvent]) -> Self {
        let mut c = DetectionCounters::default();
        let mut public = BTreeSet::new();
        let mut private = BTreeSet::new();
        for e in events {
            c.events += 1;
            if e.any_private_victim {
                c.private_attacks += 1;
            } else {
                c.public_attacks += 1;
            }
            for v in &e.victims {
                match v.visibility {
                    Visibility::Public => public.insert(v.tx_hash),
                    Visibility::Private => private.insert(v.tx_hash),
                };
            }
        }
        c.public_victims = public.len() as u64;
        c.private_victims = private.len() as u64;
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerStats {
    pub private_frontrun_count: u64,
    pub public_frontrun_count: u64,
    #[serde(with = "usd2")]
    pub total_profit_usd: Usd,
}

/// Confirmed-event tallies per attacker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerRegistry {
    pub attackers: BTreeMap<Address, AttackerStats>,
}

impl AttackerRegistry {
    pub fn record(&mut self, event: &SandwichEvent) {
        let entry = self.attackers.entry(event.attacker).or_default();
        if event.any_private_victim {
            entry.private_frontrun_count += 1;
        } else {
            entry.public_frontrun_count += 1;
        }
        entry.total_profit_usd += event.attacker_profit_usd;
    }

    pub fn merge(mut self, other: AttackerRegistry) -> AttackerRegistry {
        for (addr, s) in other.attackers {
            let e = self.attackers.entry(addr).or_default();
            e.private_frontrun_count += s.private_frontrun_count;
            e.public_frontrun_count += s.public_frontrun_count;
            e.total_profit_usd += s.total_profit_usd;
        }
        self
    }

    /// Attackers with at least one private-path sandwich.
    pub fn private_attackers(&self) -> impl Iterator<Item = (&Address, &AttackerStats)> {
        self.attackers.iter().filter(|(_, s)| s.private_frontrun_count > 0)
    }

    pub fn total_private_frontruns(&self) -> u64 {
        self.attackers.values().map(|s| s.private_frontrun_count).sum()
    }

    /// Top `k` private-path attackers, descending by count, ties by address.
    pub fn top_private(&self, k: usize) -> Vec<(Address, u64)> {
        let mut rows: Vec<(Address, u64)> = self
            .private_attackers()
            .map(|(a, s)| (*a, s.private_frontrun_count))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        rows.truncate(k);
        rows
    }
}

pub fn link_private_attackers(events: &[SandwichEvent]) -> AttackerRegistry {
    let mut reg = AttackerRegistry::default();
    for e in events {
        reg.record(e);
    }
    reg
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub events: Vec<SandwichEvent>,
    pub registry: AttackerRegistry,
    pub counters: DetectionCounters,
}

impl Detection {
    /// Builds the summary from per-block results given in block order.
    pub fn from_block_results<I>(results: I) -> Detection
    where
        I: IntoIterator<Item = (Vec<SandwichEvent>, BlockDiagnostics)>,
    {
        let mut events = Vec::new();
        let mut skips = 0;
        for (evs, diag) in results {
            events.extend(evs);
            skips += diag.consumed_backrun_skips;
        }
        let registry = link_private_attackers(&events);
        let mut counters = DetectionCounters::tally(&events);
        counters.consumed_backrun_skips = skips;
        Detection {
            events,
            registry,
            counters,
        }
    }
}

/// Runs `detect_block` over every block of a canonical-sorted dataset.
pub fn detect_all(txs: &[TxRecord]) -> Detection {
    Detection::from_block_results(blocks(txs).map(detect_block_with_diagnostics))
}

/// Blocks reported as forked (orphaned).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkedBlockSet(pub BTreeSet<u64>);

impl ForkedBlockSet {
    pub fn contains(&self, block: u64) -> bool {
        self.0.contains(&block)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<u64> for ForkedBlockSet {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        ForkedBlockSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkFilterOutcome {
    pub kept: Vec<SandwichEvent>,
    pub removed_count: u64,
    pub removed_private_attacks: u64,
    pub removed_private_victims: u64,
}

/// Drops events that sit in forked blocks.
pub fn apply_fork_filter(events: &[SandwichEvent], forks: &ForkedBlockSet) -> ForkFilterOutcome {
    let mut out = ForkFilterOutcome {
        kept: Vec::with_capacity(events.len()),
        removed_count: 0,
        removed_private_attacks: 0,
        removed_private_victims: 0,
    };
    for e in events {
        if forks.contains(e.block_number) {
            out.removed_count += 1;
            out.removed_private_attacks += e.any_private_victim as u64;
            out.removed_private_victims += e.private_victims().count() as u64;
        } else {
            out.kept.push(e.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(b: u8) -> Address {
        Address([b; 20])
    }

    fn block(legs: &[(u8, MevType)]) -> Vec<TxRecord> {
        legs.iter()
            .enumerate()
            .map(|(i, &(sender, mev))| {
                let mut h = [0u8; 32];
                h[0] = i as u8;
                h[31] = 0xee;
                let mut t = TxRecord::new(100, i as u32, 1200, TxHash(h), addr(sender));
                t.mev_type = mev;
                t.visibility = Visibility::Public;
                t
            })
            .collect()
    }

    use MevType::{Backrun as B, Frontrun as F, SandwichVictim as V, Swap as S};

    #[test]
    fn minimal_triple() {
        let evs = detect_block(&block(&[(1, F), (2, V), (1, B)]));
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].attacker, addr(1));
        assert_eq!(evs[0].victims.len(), 1);
        assert_eq!(evs[0].victims[0].sender, addr(2));
        assert_eq!((evs[0].frontrun_index, evs[0].backrun_index), (0, 2));
    }

    #[test]
    fn self_sandwich_excluded() {
        assert!(detect_block(&block(&[(1, F), (1, V), (1, B)])).is_empty());
        // external victim survives, attacker's own victim-labeled tx does not
        let evs = detect_block(&block(&[(1, F), (1, V), (2, V), (1, B)]));
        assert_eq!(evs[0].victims.len(), 1);
        assert_eq!(evs[0].victims[0].sender, addr(2));
    }

    #[test]
    fn duplicate_victim_counted_once() {
        let mut b = block(&[(1, F), (2, V), (2, V), (1, B)]);
        b[2].tx_hash = b[1].tx_hash;
        let evs = detect_block(&b);
        assert_eq!(evs[0].victims.len(), 1);
        let distinct = block(&[(1, F), (2, V), (2, V), (1, B)]);
        assert_eq!(detect_block(&distinct)[0].victims.len(), 2);
    }

    #[test]
    fn first_match_pairs_nearest_backrun() {
        let evs = detect_block(&block(&[(1, F), (2, V), (1, B), (3, V), (1, B)]));
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].backrun_index, 2);
        assert_eq!(evs[0].victims.len(), 1);
        // no victim before the first backrun: the later one is not reached
        assert!(detect_block(&block(&[(1, F), (1, B), (3, V), (1, B)])).is_empty());
    }

    #[test]
    fn backrun_is_not_reused() {
        let (evs, diag) = detect_block_with_diagnostics(&block(&[(1, F), (2, V), (1, F), (3, V), (1, B), (1, B)]));
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].frontrun_index, 0);
        assert_eq!(evs[0].backrun_index, 4);
        assert_eq!(evs[0].victims.len(), 2);
        assert_eq!(diag.consumed_backrun_skips, 1);
    }

    #[test]
    fn unmatched_and_foreign_legs_emit_nothing() {
        assert!(detect_block(&block(&[(1, F), (2, V), (3, S)])).is_empty());
        assert!(detect_block(&block(&[(1, F), (2, V), (4, B)])).is_empty());
        assert!(detect_block(&block(&[(2, V), (1, B)])).is_empty());
    }

    #[test]
    fn block_boundary_confines_detection() {
        let mut txs = block(&[(1, F), (2, V)]);
        let mut next = block(&[(1, B)]);
        next[0].block_number = 101;
        next[0].tx_hash = TxHash([0xab; 32]);
        txs.extend(next);
        assert!(detect_all(&txs).events.is_empty());
    }

    #[test]
    fn privacy_counters_and_registry() {
        let mut b = block(&[(1, F), (2, V), (3, V), (1, B)]);
        b[2].visibility = Visibility::Private;
        b[2].user_loss_usd = Some(Usd::new(1050, 2));
        b[0].extractor_profit_usd = Some(Usd::new(3, 0));
        let d = detect_all(&b);
        let e = &d.events[0];
        assert!(e.any_private_victim);
        assert!(e.loss_missing);
        assert!(e.profit_missing);
        assert_eq!(e.total_victim_loss_usd, Usd::new(1050, 2));
        assert_eq!(e.attacker_profit_usd, Usd::new(3, 0));
        assert_eq!(d.counters.private_attacks, 1);
        assert_eq!(d.counters.public_attacks, 0);
        assert_eq!((d.counters.public_victims, d.counters.private_victims), (1, 1));
        assert_eq!(d.registry.top_private(10), alloc::vec![(addr(1), 1)]);
        assert!(e.check_invariants().is_ok());
    }

    #[test]
    fn no_frontruns_zero_counters() {
        let d = detect_all(&block(&[(2, V), (1, B), (3, S)]));
        assert_eq!(d.counters, DetectionCounters::default());
        assert!(d.registry.private_attackers().next().is_none());
    }

    #[test]
    fn fork_filter_basics() {
        let d = detect_all(&block(&[(1, F), (2, V), (1, B)]));
        let none = apply_fork_filter(&d.events, &ForkedBlockSet::default());
        assert_eq!(none.kept, d.events);
        assert_eq!(none.removed_count, 0);
        let all = apply_fork_filter(&d.events, &[100u64].into_iter().collect());
        assert!(all.kept.is_empty());
        assert_eq!(all.removed_count, 1);
    }

    #[test]
    fn event_json_uses_two_decimal_strings() {
        let mut b = block(&[(1, F), (2, V), (1, B)]);
        b[1].user_loss_usd = Some(Usd::new(123456, 4));
        let e = detect_block(&b).remove(0);
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains("\"total_victim_loss_usd\":\"12.35\""));
        assert!(json.contains("\"user_loss_usd\":\"12.35\""));
        let back: SandwichEvent = serde_json::from_str(&json).unwrap();
        assert_eq!(back.victims[0].tx_hash, e.victims[0].tx_hash);
    }
}
