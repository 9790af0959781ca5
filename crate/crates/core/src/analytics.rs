//! Per-address timelines and post-exposure behavior: n-th sandwich cohorts,
//! windowed reactivation and churn, first-time private-routing adoption,
//! exposure histograms and concentration tables.
//!
//! Ordering of an address's activity is by `(timestamp, block, tx_index)`.
//! "After the anchor" always means strictly later in that order, so a
//! transaction later in the anchor's own block counts as day-0 activity.
//! Only public victimizations advance the exposure index `n`; private ones
//! are kept on the side.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::detect::SandwichEvent;
use crate::model::{Address, TxHash, TxRecord, Usd, Visibility};

pub const SECONDS_PER_DAY: u64 = 86_400;
pub const DEFAULT_WINDOW_DAYS: u32 = 60;

/// Sort key shared by activity entries and exposures.
pub type ActivityKey = (u64, u64, u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEntry {
    pub timestamp: u64,
    pub block_number: u64,
    pub tx_index: u32,
    pub tx_hash: TxHash,
    pub visibility: Visibility,
}

impl ActivityEntry {
    pub fn key(&self) -> ActivityKey {
        (self.timestamp, self.block_number, self.tx_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRef {
    pub block_number: u64,
    pub frontrun_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exposure {
    pub timestamp: u64,
    pub block_number: u64,
    pub tx_index: u32,
    pub tx_hash: TxHash,
    pub event: EventRef,
    /// 1-based, chronological.
    pub n: u32,
    /// Position of the victim transaction in the owner's activity list.
    pub activity_pos: usize,
    pub loss_usd: Option<Usd>,
}

impl Exposure {
    pub fn key(&self) -> ActivityKey {
        (self.timestamp, self.block_number, self.tx_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressTimeline {
    pub address: Address,
    pub activity: Vec<ActivityEntry>,
    /// Public-victim sandwiches, indexed by `n`.
    pub exposures: Vec<Exposure>,
    /// Private-victim sandwiches, indexed separately.
    pub private_exposures: Vec<Exposure>,
    pub first_private_ts: Option<u64>,
    pub first_private_pos: Option<usize>,
}

impl AddressTimeline {
    pub fn total_sandwiches(&self) -> usize {
        self.exposures.len() + self.private_exposures.len()
    }
}

/// One timeline per sender, sorted by address.
pub fn build_timelines(txs: &[TxRecord], events: &[SandwichEvent]) -> Vec<AddressTimeline> {
    let mut by_sender: BTreeMap<Address, Vec<ActivityEntry>> = BTreeMap::new();
    let mut by_hash: BTreeMap<TxHash, &TxRecord> = BTreeMap::new();
    for tx in txs {
        by_sender.entry(tx.sender).or_default().push(ActivityEntry {
            timestamp: tx.timestamp,
            block_number: tx.block_number,
            tx_index: tx.tx_index,
            tx_hash: tx.tx_hash,
            visibility: tx.visibility,
        });
        by_hash.insert(tx.tx_hash, tx);
    }

    let mut public: BTreeMap<Address, Vec<Exposure>> = BTreeMap::new();
    let mut private: BTreeMap<Address, Vec<Exposure>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for e in events {
        for v in &e.victims {
            if !seen.insert(v.tx_hash) {
                continue;
            }
            let Some(tx) = by_hash.get(&v.tx_hash) else {
                continue;
            };
            let exposure = Exposure {
                timestamp: tx.timestamp,
                block_number: tx.block_number,
                tx_index: tx.tx_index,
                tx_hash: tx.tx_hash,
                event: EventRef {
                    block_number: e.block_number,
                    frontrun_index: e.frontrun_index,
                },
                n: 0,
                activity_pos: 0,
                loss_usd: tx.user_loss_usd,
            };
            let target = match tx.visibility {
                Visibility::Public => &mut public,
                Visibility::Private => &mut private,
            };
            target.entry(tx.sender).or_default().push(exposure);
        }
    }

    by_sender
        .into_iter()
        .map(|(address, mut activity)| {
            activity.sort_by_key(ActivityEntry::key);
            let first_private_pos = activity.iter().position(|a| a.visibility.is_private());
            let index = |list: Option<Vec<Exposure>>| {
                let mut list = list.unwrap_or_default();
                list.sort_by_key(Exposure::key);
                for (k, x) in list.iter_mut().enumerate() {
                    x.n = k as u32 + 1;
                    x.activity_pos = activity
                        .binary_search_by_key(&x.key(), ActivityEntry::key)
                        .expect("victim transaction is in its sender's activity");
                }
                list
            };
            let exposures = index(public.remove(&address));
            let private_exposures = index(private.remove(&address));
            AddressTimeline {
                address,
                first_private_ts: first_private_pos.map(|p| activity[p].timestamp),
                first_private_pos,
                activity,
                exposures,
                private_exposures,
            }
        })
        .collect()
}

/// Lookup in a slice sorted by address (as returned by [`build_timelines`]).
pub fn find_timeline<'a>(timelines: &'a [AddressTimeline], address: &Address) -> Option<&'a AddressTimeline> {
    timelines
        .binary_search_by(|t| t.address.cmp(address))
        .ok()
        .map(|k| &timelines[k])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortMember {
    pub address: Address,
    pub anchor_ts: u64,
    pub anchor_block: u64,
    pub anchor_index: u32,
}

impl CohortMember {
    fn anchor_key(&self) -> ActivityKey {
        (self.anchor_ts, self.anchor_block, self.anchor_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub n: u32,
    pub observation_window_days: u32,
    pub members: Vec<CohortMember>,
}

impl Cohort {
    pub fn window_secs(&self) -> u64 {
        self.observation_window_days as u64 * SECONDS_PER_DAY
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Addresses with at least `n` public sandwiches whose full window after
/// the `n`-th one ends no later than `dataset_end_ts`.
pub fn nth_sandwich_cohort(timelines: &[AddressTimeline], n: u32, window_days: u32, dataset_end_ts: u64) -> Cohort {
    let window = window_days as u64 * SECONDS_PER_DAY;
    let members = if n == 0 {
        Vec::new()
    } else {
        timelines
            .iter()
            .filter_map(|t| t.exposures.get(n as usize - 1).map(|x| (t, x)))
            .filter(|(_, x)| x.timestamp.saturating_add(window) <= dataset_end_ts)
            .map(|(t, x)| CohortMember {
                address: t.address,
                anchor_ts: x.timestamp,
                anchor_block: x.block_number,
                anchor_index: x.tx_index,
            })
            .collect()
    };
    Cohort {
        n,
        observation_window_days: window_days,
        members,
    }
}

/// What happened to one cohort member inside its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemberOutcome {
    /// Day bucket of the first later transaction, if inside the window.
    pub reactivation_day: Option<u32>,
    /// Private activity already before the anchor.
    pub prior_private: bool,
    /// Day bucket of the first-ever private transaction, if it falls inside
    /// the window and after the anchor.
    pub adoption_day: Option<u32>,
}

pub fn member_outcome(member: &CohortMember, timeline: &AddressTimeline, window_secs: u64) -> MemberOutcome {
    let anchor_pos = timeline
        .activity
        .binary_search_by_key(&member.anchor_key(), ActivityEntry::key)
        .expect("anchor transaction is in the member's activity");
    let day_within = |ts: u64| {
        let delta = ts - member.anchor_ts;
        (delta <= window_secs).then_some((delta / SECONDS_PER_DAY) as u32)
    };
    let reactivation_day = timeline
        .activity
        .get(anchor_pos + 1)
        .and_then(|a| day_within(a.timestamp));
    let (prior_private, adoption_day) = match timeline.first_private_pos {
        Some(p) if p < anchor_pos => (true, None),
        Some(p) => (false, day_within(timeline.activity[p].timestamp)),
        None => (false, None),
    };
    MemberOutcome {
        reactivation_day,
        prior_private,
        adoption_day,
    }
}

fn cohort_outcomes(cohort: &Cohort, timelines: &[AddressTimeline]) -> Vec<MemberOutcome> {
    let window = cohort.window_secs();
    cohort
        .members
        .iter()
        .map(|m| {
            let t = find_timeline(timelines, &m.address).expect("cohort member has a timeline");
            member_outcome(m, t, window)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Reactivation,
    PrivateAdoption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdoptionVariant {
    All,
    ReactivatedOnly,
}

impl AdoptionVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AdoptionVariant::All => "all",
            AdoptionVariant::ReactivatedOnly => "reactivated_only",
        }
    }
}

/// Cumulative day-indexed outcome counts for one population.
///
/// `cumulative[t]` is the number of members whose outcome happened by the
/// end of day `t`, for `t = 0..=window_days`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceCurve {
    pub kind: OutcomeKind,
    pub variant: Option<AdoptionVariant>,
    pub n: u32,
    pub population: u64,
    pub cumulative: Vec<u64>,
}

impl IncidenceCurve {
    pub fn from_days<I>(
        kind: OutcomeKind,
        variant: Option<AdoptionVariant>,
        n: u32,
        population: u64,
        window_days: u32,
        days: I,
    ) -> Self
    where
        I: IntoIterator<Item = u32>,
    {
        let mut per_day = alloc::vec![0u64; window_days as usize + 1];
        for d in days {
            per_day[d as usize] += 1;
        }
        let mut acc = 0;
        for c in per_day.iter_mut() {
            acc += *c;
            *c = acc;
        }
        IncidenceCurve {
            kind,
            variant,
            n,
            population,
            cumulative: per_day,
        }
    }

    pub fn window_days(&self) -> u32 {
        self.cumulative.len() as u32 - 1
    }

    /// Fraction reached by end of day `t`; zero for an empty population.
    pub fn fraction(&self, t: usize) -> f64 {
        if self.population == 0 {
            0.0
        } else {
            self.cumulative[t] as f64 / self.population as f64
        }
    }

    pub fn final_count(&self) -> u64 {
        *self.cumulative.last().unwrap_or(&0)
    }

    pub fn final_fraction(&self) -> f64 {
        self.fraction(self.cumulative.len() - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        (0..self.cumulative.len()).map(move |t| (t as u32, self.fraction(t)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("cohort for n = {0} is empty")]
    EmptyCohort(u32),
}

pub fn reactivation_curve(cohort: &Cohort, timelines: &[AddressTimeline]) -> Result<IncidenceCurve, AnalyticsError> {
    if cohort.is_empty() {
        return Err(AnalyticsError::EmptyCohort(cohort.n));
    }
    let outcomes = cohort_outcomes(cohort, timelines);
    Ok(IncidenceCurve::from_days(
        OutcomeKind::Reactivation,
        None,
        cohort.n,
        cohort.len() as u64,
        cohort.observation_window_days,
        outcomes.iter().filter_map(|o| o.reactivation_day),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnRow {
    pub n: u32,
    pub cohort_size: u64,
    pub reactivated_count: u64,
}

impl ChurnRow {
    /// Share not reactivated; `None` for an empty cohort.
    pub fn churn_rate(&self) -> Option<f64> {
        (self.cohort_size > 0).then(|| (self.cohort_size - self.reactivated_count) as f64 / self.cohort_size as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnTable {
    pub window_days: u32,
    pub rows: Vec<ChurnRow>,
}

fn churn_row(cohort: &Cohort, outcomes: &[MemberOutcome]) -> ChurnRow {
    ChurnRow {
        n: cohort.n,
        cohort_size: cohort.len() as u64,
        reactivated_count: outcomes.iter().filter(|o| o.reactivation_day.is_some()).count() as u64,
    }
}

pub fn churn_by_n(timelines: &[AddressTimeline], n_max: u32, window_days: u32, dataset_end_ts: u64) -> ChurnTable {
    let rows = (1..=n_max)
        .map(|n| {
            let cohort = nth_sandwich_cohort(timelines, n, window_days, dataset_end_ts);
            churn_row(&cohort, &cohort_outcomes(&cohort, timelines))
        })
        .collect();
    ChurnTable { window_days, rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdoptionRow {
    pub n: u32,
    pub population: u64,
    pub switched_count: u64,
    /// Cohort members dropped because they had used private routing before.
    pub excluded_prior_private: u64,
}

impl AdoptionRow {
    pub fn rate(&self) -> Option<f64> {
        (self.population > 0).then(|| self.switched_count as f64 / self.population as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdoptionTable {
    pub variant: AdoptionVariant,
    pub rows: Vec<AdoptionRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdoptionOutcome {
    pub row: AdoptionRow,
    pub curve: IncidenceCurve,
}

fn adoption_from_outcomes(cohort: &Cohort, outcomes: &[MemberOutcome], variant: AdoptionVariant) -> AdoptionOutcome {
    let excluded = outcomes.iter().filter(|o| o.prior_private).count() as u64;
    let population: Vec<&MemberOutcome> = outcomes
        .iter()
        .filter(|o| !o.prior_private)
        .filter(|o| variant == AdoptionVariant::All || o.reactivation_day.is_some())
        .collect();
    let curve = IncidenceCurve::from_days(
        OutcomeKind::PrivateAdoption,
        Some(variant),
        cohort.n,
        population.len() as u64,
        cohort.observation_window_days,
        population.iter().filter_map(|o| o.adoption_day),
    );
    AdoptionOutcome {
        row: AdoptionRow {
            n: cohort.n,
            population: curve.population,
            switched_count: curve.final_count(),
            excluded_prior_private: excluded,
        },
        curve,
    }
}

pub fn adoption_rate(cohort: &Cohort, timelines: &[AddressTimeline], variant: AdoptionVariant) -> AdoptionOutcome {
    adoption_from_outcomes(cohort, &cohort_outcomes(cohort, timelines), variant)
}

pub fn adoption_progression(
    timelines: &[AddressTimeline],
    n_range: RangeInclusive<u32>,
    variant: AdoptionVariant,
    window_days: u32,
    dataset_end_ts: u64,
) -> AdoptionTable {
    let rows = n_range
        .map(|n| {
            let cohort = nth_sandwich_cohort(timelines, n, window_days, dataset_end_ts);
            adoption_rate(&cohort, timelines, variant).row
        })
        .collect();
    AdoptionTable { variant, rows }
}

/// Everything the behavior stage reports for `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorTables {
    pub churn: ChurnTable,
    pub adoption_all: AdoptionTable,
    pub adoption_reactivated: AdoptionTable,
    pub reactivation_curves: Vec<IncidenceCurve>,
    pub adoption_curves_all: Vec<IncidenceCurve>,
    pub adoption_curves_reactivated: Vec<IncidenceCurve>,
}

pub fn behavior_tables(
    timelines: &[AddressTimeline],
    n_max: u32,
    window_days: u32,
    dataset_end_ts: u64,
) -> BehaviorTables {
    let mut t = BehaviorTables {
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
        let cohort = nth_sandwich_cohort(timelines, n, window_days, dataset_end_ts);
        let outcomes = cohort_outcomes(&cohort, timelines);
        t.churn.rows.push(churn_row(&cohort, &outcomes));
        t.reactivation_curves.push(IncidenceCurve::from_days(
            OutcomeKind::Reactivation,
            None,
            n,
            cohort.len() as u64,
            window_days,
            outcomes.iter().filter_map(|o| o.reactivation_day),
        ));
        let all = adoption_from_outcomes(&cohort, &outcomes, AdoptionVariant::All);
        let react = adoption_from_outcomes(&cohort, &outcomes, AdoptionVariant::ReactivatedOnly);
        t.adoption_all.rows.push(all.row);
        t.adoption_curves_all.push(all.curve);
        t.adoption_reactivated.rows.push(react.row);
        t.adoption_curves_reactivated.push(react.curve);
    }
    t
}

/// Addresses (and their transaction totals) keyed by how many sandwiches
/// they suffered, public and private combined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureHistogram {
    pub address_count: BTreeMap<u64, u64>,
    pub total_tx_count: BTreeMap<u64, u64>,
}

pub fn sandwich_count_distribution(timelines: &[AddressTimeline]) -> ExposureHistogram {
    let mut h = ExposureHistogram::default();
    for t in timelines {
        let k = t.total_sandwiches() as u64;
        if k == 0 {
            continue;
        }
        *h.address_count.entry(k).or_default() += 1;
        *h.total_tx_count.entry(k).or_default() += t.activity.len() as u64;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationKind {
    Attacker,
    Victim,
    Destination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub address: Address,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcentrationTable {
    pub kind: ConcentrationKind,
    /// Descending by count, ties by ascending address.
    pub rows: Vec<ConcentrationRow>,
}

impl ConcentrationTable {
    fn from_counts(kind: ConcentrationKind, counts: BTreeMap<Address, u64>) -> Self {
        let mut rows: Vec<ConcentrationRow> = counts
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(address, count)| ConcentrationRow { address, count })
            .collect();
        // BTreeMap order is ascending address; the stable sort keeps it for ties
        rows.sort_by_key(|r| core::cmp::Reverse(r.count));
        ConcentrationTable { kind, rows }
    }

    pub fn truncated(&self, k: usize) -> ConcentrationTable {
        ConcentrationTable {
            kind: self.kind,
            rows: self.rows.iter().take(k).copied().collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concentration {
    pub attackers: ConcentrationTable,
    pub victims: ConcentrationTable,
    pub destinations: ConcentrationTable,
}

/// Private-path concentration: attackers by private frontrun count, victim
/// senders by private events suffered, destination contracts by private
/// victim transactions. `k = None` keeps every row.
pub fn concentration_tables(events: &[SandwichEvent], k: Option<usize>) -> Concentration {
    let mut attackers: BTreeMap<Address, u64> = BTreeMap::new();
    let mut victims: BTreeMap<Address, u64> = BTreeMap::new();
    let mut destinations: BTreeMap<Address, u64> = BTreeMap::new();
    let mut seen_victim_tx = BTreeSet::new();
    for e in events.iter().filter(|e| e.any_private_victim) {
        *attackers.entry(e.attacker).or_default() += 1;
        let senders: BTreeSet<Address> = e.private_victims().map(|v| v.sender).collect();
        for s in senders {
            *victims.entry(s).or_default() += 1;
        }
        for v in e.private_victims() {
            if let (Some(dest), true) = (v.destination, seen_victim_tx.insert(v.tx_hash)) {
                *destinations.entry(dest).or_default() += 1;
            }
        }
    }
    let cut = |t: ConcentrationTable| match k {
        Some(k) => t.truncated(k),
        None => t,
    };
    Concentration {
        attackers: cut(ConcentrationTable::from_counts(ConcentrationKind::Attacker, attackers)),
        victims: cut(ConcentrationTable::from_counts(ConcentrationKind::Victim, victims)),
        destinations: cut(ConcentrationTable::from_counts(
            ConcentrationKind::Destination,
            destinations,
        )),
    }
}

/// Losses up to and including the anchor, split into first-time private
/// adopters and everyone else in the (non-prior-private) cohort. Members
/// without any known loss value are skipped.
pub fn switcher_loss_split(cohort: &Cohort, timelines: &[AddressTimeline]) -> (Vec<Usd>, Vec<Usd>) {
    let window = cohort.window_secs();
    let mut switchers = Vec::new();
    let mut others = Vec::new();
    for m in &cohort.members {
        let Some(t) = find_timeline(timelines, &m.address) else {
            continue;
        };
        let o = member_outcome(m, t, window);
        if o.prior_private {
            continue;
        }
        let known: Vec<Usd> = t
            .exposures
            .iter()
            .take(cohort.n as usize)
            .filter_map(|x| x.loss_usd)
            .collect();
        if known.is_empty() {
            continue;
        }
        let total: Usd = known.into_iter().sum();
        if o.adoption_day.is_some() {
            switchers.push(total);
        } else {
            others.push(total);
        }
    }
    (switchers, others)
}
