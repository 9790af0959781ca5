//! Dataset canonicalization, mempool visibility labeling, block-range
//! filtering and monthly aggregates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{BlockRange, TxHash, TxRecord, Visibility};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("duplicate position: block {block_number} index {tx_index}")]
    DuplicatePosition { block_number: u64, tx_index: u32 },
    #[error("duplicate transaction hash {0}")]
    DuplicateHash(TxHash),
    #[error("block {block_number} has inconsistent timestamps ({first} vs {other})")]
    InconsistentTimestamp { block_number: u64, first: u64, other: u64 },
    #[error("invalid block range: start {start_block} > end {end_block}")]
    InvalidRange { start_block: u64, end_block: u64 },
    #[error("block ranges {0} and {1} overlap")]
    OverlappingRanges(String, String),
}

/// Sorts by `(block_number, tx_index)` and validates dataset invariants:
/// unique positions, unique hashes, one timestamp per block.
pub fn canonicalize(mut txs: Vec<TxRecord>) -> Result<Vec<TxRecord>, DataError> {
    sort_canonical(&mut txs);
    let mut hashes = BTreeSet::new();
    for (k, tx) in txs.iter().enumerate() {
        if k > 0 {
            let prev = &txs[k - 1];
            if prev.position() == tx.position() {
                return Err(DataError::DuplicatePosition {
                    block_number: tx.block_number,
                    tx_index: tx.tx_index,
                });
            }
            if prev.block_number == tx.block_number && prev.timestamp != tx.timestamp {
                return Err(DataError::InconsistentTimestamp {
                    block_number: tx.block_number,
                    first: prev.timestamp,
                    other: tx.timestamp,
                });
            }
        }
        if !hashes.insert(tx.tx_hash) {
            return Err(DataError::DuplicateHash(tx.tx_hash));
        }
    }
    Ok(txs)
}

/// Stable lexicographic `(block_number, tx_index)` sort.
pub fn sort_canonical(txs: &mut [TxRecord]) {
    txs.sort_by_key(|t| t.position());
}

pub fn is_canonical(txs: &[TxRecord]) -> bool {
    txs.windows(2).all(|w| w[0].position() < w[1].position())
}

/// Earliest public-mempool observation per transaction hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MempoolIndex {
    first_seen: BTreeMap<TxHash, u64>,
}

impl MempoolIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an observation, keeping the earliest timestamp per hash.
    pub fn observe(&mut self, hash: TxHash, seen_ts: u64) {
        self.first_seen
            .entry(hash)
            .and_modify(|ts| *ts = (*ts).min(seen_ts))
            .or_insert(seen_ts);
    }

    pub fn first_seen(&self, hash: &TxHash) -> Option<u64> {
        self.first_seen.get(hash).copied()
    }

    pub fn len(&self) -> usize {
        self.first_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_seen.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TxHash, &u64)> {
        self.first_seen.iter()
    }
}

impl FromIterator<(TxHash, u64)> for MempoolIndex {
    fn from_iter<I: IntoIterator<Item = (TxHash, u64)>>(iter: I) -> Self {
        let mut idx = MempoolIndex::new();
        for (h, ts) in iter {
            idx.observe(h, ts);
        }
        idx
    }
}

/// How an observation at exactly the block timestamp is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// `seen <= block_ts` is public. Both clocks have one-second resolution.
    #[default]
    Inclusive,
    /// Only `seen < block_ts` is public.
    Strict,
}

impl TieRule {
    pub fn from_strict_flag(strict: bool) -> Self {
        if strict {
            TieRule::Strict
        } else {
            TieRule::Inclusive
        }
    }

    pub fn visibility(self, seen: Option<u64>, block_ts: u64) -> Visibility {
        let public = match (seen, self) {
            (None, _) => false,
            (Some(s), TieRule::Inclusive) => s <= block_ts,
            (Some(s), TieRule::Strict) => s < block_ts,
        };
        if public {
            Visibility::Public
        } else {
            Visibility::Private
        }
    }
}

/// Relabels every record against the mempool index; nothing else changes.
pub fn label_visibility(txs: &[TxRecord], mempool: &MempoolIndex, rule: TieRule) -> Vec<TxRecord> {
    let mut out = txs.to_vec();
    label_visibility_in_place(&mut out, mempool, rule);
    out
}

pub fn label_visibility_in_place(txs: &mut [TxRecord], mempool: &MempoolIndex, rule: TieRule) {
    for tx in txs.iter_mut() {
        tx.visibility = rule.visibility(mempool.first_seen(&tx.tx_hash), tx.timestamp);
    }
}

/// How much of a dataset the mempool index covers at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MempoolCoverage {
    pub total: u64,
    pub observed: u64,
}

impl MempoolCoverage {
    pub fn absent_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            (self.total - self.observed) as f64 / self.total as f64
        }
    }
}

pub fn mempool_coverage(txs: &[TxRecord], mempool: &MempoolIndex) -> MempoolCoverage {
    MempoolCoverage {
        total: txs.len() as u64,
        observed: txs.iter().filter(|t| mempool.first_seen(&t.tx_hash).is_some()).count() as u64,
    }
}

pub fn filter_block_range(txs: &[TxRecord], range: &BlockRange) -> Result<Vec<TxRecord>, DataError> {
    check_range(range)?;
    Ok(txs.iter().filter(|t| range.contains(t.block_number)).cloned().collect())
}

fn check_range(range: &BlockRange) -> Result<(), DataError> {
    if range.is_valid() {
        Ok(())
    } else {
        Err(DataError::InvalidRange {
            start_block: range.start_block,
            end_block: range.end_block,
        })
    }
}

/// Totals for one month window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthRow {
    pub month: String,
    pub start_block: u64,
    pub end_block: u64,
    pub total_tx_count: u64,
    pub block_count: u64,
    pub public_count: u64,
    pub private_count: u64,
}

impl MonthRow {
    pub fn public_share(&self) -> f64 {
        share(self.public_count, self.total_tx_count)
    }

    pub fn private_share(&self) -> f64 {
        share(self.private_count, self.total_tx_count)
    }
}

fn share(part: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyOverview {
    pub months: Vec<MonthRow>,
    /// Records that fall in none of the configured windows.
    pub unassigned: u64,
}

/// Per-window totals. Month attribution is by block number, not calendar date.
pub fn monthly_overview(txs: &[TxRecord], ranges: &[BlockRange]) -> Result<MonthlyOverview, DataError> {
    for r in ranges {
        check_range(r)?;
    }
    for (a, ra) in ranges.iter().enumerate() {
        for rb in &ranges[a + 1..] {
            if ra.overlaps(rb) {
                return Err(DataError::OverlappingRanges(ra.display_label(), rb.display_label()));
            }
        }
    }

    let mut order: Vec<usize> = (0..ranges.len()).collect();
    order.sort_by_key(|&k| ranges[k].start_block);

    let mut rows: Vec<MonthRow> = ranges
        .iter()
        .map(|r| MonthRow {
            month: r.display_label(),
            start_block: r.start_block,
            end_block: r.end_block,
            total_tx_count: 0,
            block_count: 0,
            public_count: 0,
            private_count: 0,
        })
        .collect();
    let mut last_block: Vec<Option<u64>> = alloc::vec![None; ranges.len()];
    let mut unassigned = 0;

    for tx in txs {
        // ranges are disjoint, so at most one match
        let found = order
            .binary_search_by(|&k| {
                let r = &ranges[k];
                if r.end_block < tx.block_number {
                    core::cmp::Ordering::Less
                } else if r.start_block > tx.block_number {
                    core::cmp::Ordering::Greater
                } else {
                    core::cmp::Ordering::Equal
                }
            })
            .ok()
            .map(|pos| order[pos]);
        let Some(k) = found else {
            unassigned += 1;
            continue;
        };
        let row = &mut rows[k];
        row.total_tx_count += 1;
        match tx.visibility {
            Visibility::Public => row.public_count += 1,
            Visibility::Private => row.private_count += 1,
        }
        // input is canonical, so a new block number means a new block
        if last_block[k] != Some(tx.block_number) {
            last_block[k] = Some(tx.block_number);
            row.block_count += 1;
        }
    }
    if !is_canonical(txs) {
        // block counts above assume sorted input; recount exactly otherwise
        for (k, r) in ranges.iter().enumerate() {
            rows[k].block_count = txs
                .iter()
                .filter(|t| r.contains(t.block_number))
                .map(|t| t.block_number)
                .collect::<BTreeSet<_>>()
                .len() as u64;
        }
    }
    Ok(MonthlyOverview {
        months: rows,
        unassigned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Address;

    fn tx(block: u64, idx: u32, seed: u8) -> TxRecord {
        let mut h = [0u8; 32];
        h[0] = seed;
        h[1] = idx as u8;
        h[2] = block as u8;
        TxRecord::new(block, idx, block * 12, TxHash(h), Address([seed; 20]))
    }

    #[test]
    fn canonicalize_sorts_shuffled_rows() {
        let out = canonicalize(alloc::vec![tx(3, 0, 1), tx(1, 1, 2), tx(1, 0, 3)]).unwrap();
        let pos: Vec<_> = out.iter().map(|t| t.position()).collect();
        assert_eq!(pos, alloc::vec![(1, 0), (1, 1), (3, 0)]);
        assert!(canonicalize(Vec::new()).unwrap().is_empty());
    }

    #[test]
    fn canonicalize_rejects_duplicates() {
        let a = tx(1, 0, 1);
        let mut b = tx(1, 0, 2);
        b.tx_hash = TxHash([9; 32]);
        assert!(matches!(
            canonicalize(alloc::vec![a.clone(), b]),
            Err(DataError::DuplicatePosition { .. })
        ));
        let mut c = tx(2, 0, 1);
        c.tx_hash = a.tx_hash;
        assert!(matches!(
            canonicalize(alloc::vec![a.clone(), c]),
            Err(DataError::DuplicateHash(_))
        ));
        let mut d = tx(1, 1, 1);
        d.timestamp += 1;
        assert!(matches!(
            canonicalize(alloc::vec![a, d]),
            Err(DataError::InconsistentTimestamp { .. })
        ));
    }

    #[test]
    fn visibility_rule_cases() {
        let t = tx(10, 0, 1);
        let block_ts = t.timestamp;
        let mut idx = MempoolIndex::new();
        idx.observe(t.tx_hash, block_ts - 10);
        assert_eq!(
            label_visibility(core::slice::from_ref(&t), &idx, TieRule::Inclusive)[0].visibility,
            Visibility::Public
        );

        let empty = MempoolIndex::new();
        assert_eq!(
            label_visibility(core::slice::from_ref(&t), &empty, TieRule::Inclusive)[0].visibility,
            Visibility::Private
        );

        let mut late = MempoolIndex::new();
        late.observe(t.tx_hash, block_ts + 1);
        assert_eq!(
            label_visibility(core::slice::from_ref(&t), &late, TieRule::Inclusive)[0].visibility,
            Visibility::Private
        );

        let mut tie = MempoolIndex::new();
        tie.observe(t.tx_hash, block_ts);
        assert_eq!(
            label_visibility(core::slice::from_ref(&t), &tie, TieRule::Inclusive)[0].visibility,
            Visibility::Public
        );
        assert_eq!(
            label_visibility(&[t], &tie, TieRule::Strict)[0].visibility,
            Visibility::Private
        );
    }

    #[test]
    fn mempool_keeps_earliest_observation() {
        let h = TxHash([4; 32]);
        let idx: MempoolIndex = [(h, 50), (h, 20), (h, 30)].into_iter().collect();
        assert_eq!(idx.first_seen(&h), Some(20));
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn block_range_filter() {
        let txs = alloc::vec![tx(1, 0, 1), tx(2, 0, 2), tx(5, 0, 3)];
        assert!(filter_block_range(&txs, &BlockRange::new(3, 4)).unwrap().is_empty());
        assert_eq!(filter_block_range(&txs, &BlockRange::new(1, 5)).unwrap(), txs);
        assert_eq!(
            filter_block_range(&txs, &BlockRange::new(5, 1)),
            Err(DataError::InvalidRange {
                start_block: 5,
                end_block: 1
            })
        );
    }

    #[test]
    fn monthly_single_private() {
        let txs = alloc::vec![tx(7, 0, 1)];
        let o = monthly_overview(&txs, &[BlockRange::labeled(0, 10, "m1")]).unwrap();
        let row = &o.months[0];
        assert_eq!(
            (row.total_tx_count, row.private_count, row.public_count, row.block_count),
            (1, 1, 0, 1)
        );
        assert_eq!(row.private_share(), 1.0);
    }

    #[test]
    fn monthly_rejects_overlap() {
        let err = monthly_overview(
            &[],
            &[BlockRange::labeled(0, 10, "a"), BlockRange::labeled(10, 20, "b")],
        );
        assert!(matches!(err, Err(DataError::OverlappingRanges(_, _))));
    }
}
