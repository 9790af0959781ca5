//! MEV labels from an external provider and the visibility × MEV crosstab.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{BlockRange, MevType, TxHash, TxRecord, Usd, Visibility};

/// Provider label for one transaction.
///
/// `block_number` keys the per-block provider endpoint and cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MevLabel {
    pub block_number: u64,
    pub tx_hash: TxHash,
    pub mev_type: MevType,
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub user_loss_usd: Option<Usd>,
    #[serde(default)]
    pub extractor_profit_usd: Option<Usd>,
    #[serde(default)]
    pub swap_volume_usd: Option<Usd>,
    #[serde(default)]
    pub swap_count: Option<u64>,
}

impl MevLabel {
    pub fn new(block_number: u64, tx_hash: TxHash, mev_type: MevType) -> Self {
        MevLabel {
            block_number,
            tx_hash,
            mev_type,
            protocol: None,
            user_loss_usd: None,
            extractor_profit_usd: None,
            swap_volume_usd: None,
            swap_count: None,
        }
    }

    /// The label a record currently carries, if it carries anything.
    pub fn from_record(tx: &TxRecord) -> Option<MevLabel> {
        let bare = tx.mev_type == MevType::NoneLabel
            && tx.protocol.is_none()
            && tx.user_loss_usd.is_none()
            && tx.extractor_profit_usd.is_none()
            && tx.swap_volume_usd.is_none()
            && tx.swap_count.is_none();
        if bare {
            return None;
        }
        Some(MevLabel {
            block_number: tx.block_number,
            tx_hash: tx.tx_hash,
            mev_type: tx.mev_type,
            protocol: tx.protocol.clone(),
            user_loss_usd: tx.user_loss_usd,
            extractor_profit_usd: tx.extractor_profit_usd,
            swap_volume_usd: tx.swap_volume_usd,
            swap_count: tx.swap_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnrichError {
    #[error("conflicting labels for {0}")]
    ConflictingLabels(TxHash),
}

/// Labels whose block lies inside `range`.
pub fn labels_in_range<'a>(labels: &'a [MevLabel], range: &'a BlockRange) -> impl Iterator<Item = &'a MevLabel> + 'a {
    labels.iter().filter(move |l| range.contains(l.block_number))
}

fn index_labels(labels: &[MevLabel]) -> Result<BTreeMap<TxHash, &MevLabel>, EnrichError> {
    let mut by_hash: BTreeMap<TxHash, &MevLabel> = BTreeMap::new();
    for l in labels {
        if let Some(prev) = by_hash.insert(l.tx_hash, l) {
            if prev != l {
                return Err(EnrichError::ConflictingLabels(l.tx_hash));
            }
        }
    }
    Ok(by_hash)
}

/// Copies each matching label's type and monetized fields onto its record.
/// Records without a label are left untouched.
pub fn apply_labels(txs: &[TxRecord], labels: &[MevLabel]) -> Result<Vec<TxRecord>, EnrichError> {
    let by_hash = index_labels(labels)?;
    Ok(txs
        .iter()
        .map(|tx| match by_hash.get(&tx.tx_hash) {
            Some(l) => TxRecord {
                mev_type: l.mev_type,
                protocol: l.protocol.clone(),
                user_loss_usd: l.user_loss_usd,
                extractor_profit_usd: l.extractor_profit_usd,
                swap_volume_usd: l.swap_volume_usd,
                swap_count: l.swap_count,
                ..tx.clone()
            },
            None => tx.clone(),
        })
        .collect())
}

/// Share of records that received a provider label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCoverage {
    pub records: u64,
    pub labeled: u64,
    pub labels_without_record: u64,
}

pub fn label_coverage(txs: &[TxRecord], labels: &[MevLabel]) -> LabelCoverage {
    let hashes: alloc::collections::BTreeSet<TxHash> = txs.iter().map(|t| t.tx_hash).collect();
    let label_hashes: alloc::collections::BTreeSet<TxHash> = labels.iter().map(|l| l.tx_hash).collect();
    LabelCoverage {
        records: txs.len() as u64,
        labeled: hashes.intersection(&label_hashes).count() as u64,
        labels_without_record: label_hashes.difference(&hashes).count() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosstabRow {
    pub visibility: Visibility,
    pub mev_type: MevType,
    pub count: u64,
}

/// One row per occurring pair, descending by count.
pub fn visibility_mev_crosstab(txs: &[TxRecord]) -> Vec<CrosstabRow> {
    let mut counts: BTreeMap<(Visibility, MevType), u64> = BTreeMap::new();
    for t in txs {
        *counts.entry((t.visibility, t.mev_type)).or_default() += 1;
    }
    let mut rows: Vec<CrosstabRow> = counts
        .into_iter()
        .map(|((visibility, mev_type), count)| CrosstabRow {
            visibility,
            mev_type,
            count,
        })
        .collect();
    // stable: ties keep (visibility, mev_type) order
    rows.sort_by_key(|r| core::cmp::Reverse(r.count));
    rows
}

/// Crosstab marginal over MEV types: `(public, private)`.
pub fn crosstab_visibility_marginal(rows: &[CrosstabRow]) -> (u64, u64) {
    rows.iter().fold((0, 0), |(p, q), r| match r.visibility {
        Visibility::Public => (p + r.count, q),
        Visibility::Private => (p, q + r.count),
    })
}
