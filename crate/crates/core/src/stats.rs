//! Distribution summaries and two-sample comparisons: Mann-Whitney U with
//! tie correction and Cliff's delta.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use rust_decimal::prelude::ToPrimitive;

use crate::model::{usd2, Usd};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
}

/// Five-number summary plus mean and total, exact on decimals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: u64,
    #[serde(with = "usd2")]
    pub mean: Usd,
    #[serde(with = "usd2")]
    pub median: Usd,
    #[serde(with = "usd2")]
    pub q1: Usd,
    #[serde(with = "usd2")]
    pub q3: Usd,
    #[serde(with = "usd2")]
    pub min: Usd,
    #[serde(with = "usd2")]
    pub max: Usd,
    #[serde(with = "usd2")]
    pub total: Usd,
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// position `h = (n - 1) p`, value `x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.
pub fn quantile_sorted(sorted: &[Usd], p: Usd) -> Usd {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = Usd::from(n as u64 - 1) * p;
    let lo = h.floor();
    let frac = h - lo;
    let k = lo.to_usize().unwrap_or(0);
    if k + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[k] + frac * (sorted[k + 1] - sorted[k])
    }
}

pub fn summarize(values: &[Usd]) -> Result<SummaryStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort();
    let total: Usd = sorted.iter().copied().sum();
    let count = sorted.len() as u64;
    Ok(SummaryStats {
        count,
        mean: total / Usd::from(count),
        median: quantile_sorted(&sorted, Usd::new(5, 1)),
        q1: quantile_sorted(&sorted, Usd::new(25, 2)),
        q3: quantile_sorted(&sorted, Usd::new(75, 2)),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        total,
    })
}

/// Largest `min(n1, n2)` for which the exact permutation distribution is used.
pub const EXACT_MAX_SMALLER: usize = 7;
/// Largest `n1 + n2` for which the exact distribution is computed at all.
pub const EXACT_MAX_TOTAL: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub n1: u64,
    pub n2: u64,
    /// `U` for the first sample: pairs with `a > b`, plus half the ties.
    pub u_statistic: f64,
    /// Tie-corrected normal approximation with continuity correction.
    pub z_score: f64,
    /// Two-sided p-value; exact when `exact` is set.
    pub p_value: f64,
    /// `P(U <= u)` under the null.
    pub p_less: f64,
    /// `P(U >= u)` under the null.
    pub p_greater: f64,
    pub exact: bool,
    /// Every observation was identical; p is 1 by convention.
    pub degenerate: bool,
}

/// Average ranks (doubled, so they stay integral) of the pooled sample,
/// plus the tie-group sizes.
fn doubled_ranks<T: Ord>(a: &[T], b: &[T]) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let mut pooled: Vec<(&T, bool)> = a
        .iter()
        .map(|x| (x, true))
        .chain(b.iter().map(|x| (x, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.cmp(y.0));
    let mut ranks_a = Vec::with_capacity(a.len());
    let mut ranks_b = Vec::with_capacity(b.len());
    let mut ties = Vec::new();
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // ranks start..end are 1-based start+1..=end, average doubled = start + end + 1
        let r2 = (start + end + 1) as u64;
        for item in &pooled[start..end] {
            if item.1 {
                ranks_a.push(r2);
            } else {
                ranks_b.push(r2);
            }
        }
        ties.push((end - start) as u64);
        start = end;
    }
    (ranks_a, ranks_b, ties)
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

pub fn mann_whitney_u<T: Ord>(a: &[T], b: &[T]) -> Result<UTestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n1 = a.len() as u64;
    let n2 = b.len() as u64;
    let n = n1 + n2;
    let (ranks_a, ranks_b, ties) = doubled_ranks(a, b);
    let r1_doubled: u64 = ranks_a.iter().sum();
    // 2U = 2R1 - n1(n1 + 1)
    let u2 = r1_doubled - n1 * (n1 + 1);
    let u = u2 as f64 / 2.0;
    let mu = (n1 * n2) as f64 / 2.0;

    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let variance = (n1 * n2) as f64 / 12.0 * ((n + 1) as f64 - tie_term / (n * (n - 1)).max(1) as f64);
    let degenerate = ties.len() == 1;

    if degenerate || variance <= 0.0 {
        return Ok(UTestResult {
            n1,
            n2,
            u_statistic: u,
            z_score: 0.0,
            p_value: 1.0,
            p_less: 1.0,
            p_greater: 1.0,
            exact: false,
            degenerate: true,
        });
    }

    let sd = libm::sqrt(variance);
    let diff = u - mu;
    let corrected = (libm::fabs(diff) - 0.5).max(0.0);
    let z = if diff < 0.0 { -corrected / sd } else { corrected / sd };
    let mut p_value = (2.0 * normal_sf(libm::fabs(z))).min(1.0);
    let mut p_less = 1.0 - normal_sf(z);
    let mut p_greater = normal_sf(z);
    let mut exact = false;

    if (n1.min(n2) as usize) <= EXACT_MAX_SMALLER && (n as usize) <= EXACT_MAX_TOTAL {
        // enumerate subsets for the smaller sample, then map to U of `a`
        let a_smaller = n1 <= n2;
        let k = n1.min(n2);
        let mut all = ranks_a;
        all.extend(ranks_b);
        let dist = rank_sum_distribution(&all, k as usize);
        let total: u128 = dist.iter().sum();
        let offset = k * (k + 1);
        let centre = (n1 * n2) as i128;
        let obs_dev = (u2 as i128 - centre).abs();
        let (mut le, mut ge, mut two) = (0u128, 0u128, 0u128);
        for (s, &count) in dist.iter().enumerate() {
            if count == 0 || (s as u64) < offset {
                continue;
            }
            let u2_small = s as u64 - offset;
            let u2_s = if a_smaller { u2_small } else { 2 * n1 * n2 - u2_small };
            if u2_s <= u2 {
                le += count;
            }
            if u2_s >= u2 {
                ge += count;
            }
            if (u2_s as i128 - centre).abs() >= obs_dev {
                two += count;
            }
        }
        p_less = le as f64 / total as f64;
        p_greater = ge as f64 / total as f64;
        p_value = (two as f64 / total as f64).min(1.0);
        exact = true;
    }

    Ok(UTestResult {
        n1,
        n2,
        u_statistic: u,
        z_score: z,
        p_value,
        p_less,
        p_greater,
        exact,
        degenerate: false,
    })
}

/// Number of size-`k` subsets of `values` (with multiplicity) per subset sum.
fn rank_sum_distribution(values: &[u64], k: usize) -> Vec<u128> {
    let max_sum: u64 = {
        let mut v = values.to_vec();
        v.sort_unstable_by(|x, y| y.cmp(x));
        v.iter().take(k).sum()
    };
    let width = max_sum as usize + 1;
    // dp[c][s]: subsets of size c with sum s over values seen so far
    let mut dp = alloc::vec![alloc::vec![0u128; width]; k + 1];
    dp[0][0] = 1;
    for &v in values {
        let v = v as usize;
        for c in (1..=k).rev() {
            let (lower, upper) = dp.split_at_mut(c);
            let src = &lower[c - 1];
            let dst = &mut upper[0];
            for s in (v..width).rev() {
                let add = src[s - v];
                if add != 0 {
                    dst[s] += add;
                }
            }
        }
    }
    dp.swap_remove(k)
}

/// Cliff's delta with its dominance counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub cliffs_delta: f64,
    /// Pairs with `a > b`.
    pub greater: u64,
    /// Pairs with `a < b`.
    pub less: u64,
    pub n1: u64,
    pub n2: u64,
}

impl EffectSize {
    pub fn from_counts(greater: u64, less: u64, n1: u64, n2: u64) -> Self {
        EffectSize {
            cliffs_delta: (greater as f64 - less as f64) / (n1 * n2) as f64,
            greater,
            less,
            n1,
            n2,
        }
    }
}

/// `(#{a > b} - #{a < b}) / (n1 n2)` in `O((n1 + n2) log n2)`.
pub fn cliffs_delta<T: Ord>(a: &[T], b: &[T]) -> Result<EffectSize, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted: Vec<&T> = b.iter().collect();
    sorted.sort();
    let (mut greater, mut less) = (0u64, 0u64);
    for x in a {
        let below = sorted.partition_point(|y| (*y).cmp(x) == Ordering::Less);
        let not_above = sorted.partition_point(|y| (*y).cmp(x) != Ordering::Greater);
        greater += below as u64;
        less += (sorted.len() - not_above) as u64;
    }
    Ok(EffectSize::from_counts(greater, less, a.len() as u64, b.len() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: i64) -> Usd {
        Usd::from(v)
    }

    #[test]
    fn summary_symmetric_case() {
        let s = summarize(&[d(1), d(2), d(3), d(4), d(5)]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.max, s.min), (d(3), d(2), d(4), d(5), d(1)));
        assert_eq!(s.mean, d(3));
        assert_eq!(s.total, d(15));
        assert_eq!(summarize(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn summary_interpolates() {
        let s = summarize(&[d(1), d(2), d(3), d(4)]).unwrap();
        assert_eq!(s.median, Usd::new(25, 1));
        assert_eq!(s.q1, Usd::new(175, 2));
        assert_eq!(s.q3, Usd::new(325, 2));
        let one = summarize(&[Usd::new(1234, 2)]).unwrap();
        assert_eq!(
            (one.q1, one.median, one.q3),
            (Usd::new(1234, 2), Usd::new(1234, 2), Usd::new(1234, 2))
        );
    }

    #[test]
    fn identical_samples_are_neutral() {
        let a = [1, 2, 3];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u_statistic, 4.5);
        assert_eq!(r.z_score, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(cliffs_delta(&a, &a).unwrap().cliffs_delta, 0.0);
    }

    #[test]
    fn complete_separation_small() {
        let r = mann_whitney_u(&[1, 2, 3], &[4, 5, 6]).unwrap();
        assert!(r.exact);
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.p_less, 1.0 / 20.0);
        assert_eq!(r.p_value, 2.0 / 20.0);
        assert_eq!(cliffs_delta(&[2, 2], &[1, 1]).unwrap().cliffs_delta, 1.0);
    }

    #[test]
    fn all_identical_is_degenerate() {
        let r = mann_whitney_u(&[7, 7], &[7, 7, 7]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert_eq!(mann_whitney_u::<i32>(&[], &[1]), Err(StatsError::EmptyInput));
        assert_eq!(cliffs_delta::<i32>(&[1], &[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn large_shift_detected() {
        let a: Vec<i64> = (0..200).collect();
        let b: Vec<i64> = (60..260).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 0.01);
        assert!(r.z_score < 0.0);
    }

    #[test]
    fn ties_use_average_ranks() {
        // pairs a>b: (2,1) ; ties: (2,2) counts half
        let r = mann_whitney_u(&[2, 0], &[1, 2]).unwrap();
        assert_eq!(r.u_statistic, 1.5);
    }
}
