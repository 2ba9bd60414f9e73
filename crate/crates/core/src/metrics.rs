//! Fairness, efficiency, and rank-correlation metrics.
//!
//! Everything in this module is a pure function over plain slices: Gini
//! coefficient of per-agent task counts, return on investment, the combined
//! welfare score (fairness x efficiency), cross-flow aggregation, and
//! tie-corrected Spearman correlation with significance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Metrics captured after a single allocation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub round: u32,
    pub gini: f64,
    pub fairness: f64,
    pub roi: f64,
    pub swf: f64,
}

impl MetricSnapshot {
    /// Builds a snapshot from the raw gini and roi values, deriving
    /// `fairness = 1 - gini` and `swf = fairness * roi` so the product
    /// invariant holds by construction.
    pub fn new(round: u32, gini: f64, roi: f64) -> Self {
        let fairness = 1.0 - gini;
        MetricSnapshot {
            round,
            gini,
            fairness,
            roi,
            swf: fairness * roi,
        }
    }
}

/// Gini coefficient of an allocation count vector via the pairwise formula
/// `sum_jk |x_j - x_k| / (2 n^2 mean(x))`.
///
/// Returns 0 for an all-zero vector, so fairness starts at 1 before any
/// allocation has happened. Requires at least two agents.
pub fn gini(counts: &[f64]) -> Result<f64, MetricsError> {
    if counts.len() < 2 {
        return Err(MetricsError::InvalidInput(format!(
            "gini needs at least 2 agents, got {}",
            counts.len()
        )));
    }
    if counts.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(MetricsError::InvalidInput(
            "gini counts must be finite and non-negative".into(),
        ));
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let n = counts.len() as f64;
    let mut abs_diff_sum = 0.0;
    for a in counts {
        for b in counts {
            abs_diff_sum += (a - b).abs();
        }
    }
    Ok(abs_diff_sum / (2.0 * n * n * (total / n)))
}

/// Return on investment: accumulated reward over accumulated cost.
///
/// Returns 0 when the total cost is 0 (covers the empty history).
pub fn roi(rewards: &[f64], costs: &[f64]) -> Result<f64, MetricsError> {
    if rewards.len() != costs.len() {
        return Err(MetricsError::InvalidInput(format!(
            "roi length mismatch: {} rewards vs {} costs",
            rewards.len(),
            costs.len()
        )));
    }
    if rewards
        .iter()
        .chain(costs.iter())
        .any(|v| *v < 0.0 || !v.is_finite())
    {
        return Err(MetricsError::InvalidInput(
            "roi entries must be finite and non-negative".into(),
        ));
    }
    let total_cost: f64 = costs.iter().sum();
    if total_cost == 0.0 {
        return Ok(0.0);
    }
    let total_reward: f64 = rewards.iter().sum();
    Ok(total_reward / total_cost)
}

/// Combined welfare score: fairness times efficiency, no clamping.
pub fn swf_score(fairness: f64, roi: f64) -> f64 {
    fairness * roi
}

/// Cross-flow aggregate of final per-flow snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub score: f64,
    pub fairness: f64,
    pub efficiency: f64,
}

/// Averages final snapshots across flows. The reported score is the mean of
/// the per-flow products, not the product of the mean fairness and mean
/// efficiency; the two differ whenever flows disagree.
pub fn aggregate_runs(snapshots: &[MetricSnapshot]) -> Result<Aggregate, MetricsError> {
    if snapshots.is_empty() {
        return Err(MetricsError::InvalidInput(
            "aggregate_runs needs at least one snapshot".into(),
        ));
    }
    let n = snapshots.len() as f64;
    Ok(Aggregate {
        score: snapshots.iter().map(|s| s.swf).sum::<f64>() / n,
        fairness: snapshots.iter().map(|s| s.fairness).sum::<f64>() / n,
        efficiency: snapshots.iter().map(|s| s.roi).sum::<f64>() / n,
    })
}

/// Spearman correlation plus a degeneracy flag for constant inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    /// True when either vector is constant; `rho` is reported as 0 so that
    /// downstream clustering treats the pair as uninformative.
    pub degenerate: bool,
}

/// Mid-ranks (fractional ranks) of a vector; tied values share the average
/// of the rank positions they occupy.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-NaN values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Tie-corrected Spearman rank correlation: Pearson correlation of mid-ranks.
///
/// A constant vector has no rank ordering at all, so the pair is flagged
/// degenerate and the correlation reported as 0.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::InvalidInput(format!(
            "spearman length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(MetricsError::InvalidInput(
            "spearman needs at least 2 observations".into(),
        ));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(Spearman {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(Spearman {
        rho: cov / (vx * vy).sqrt(),
        degenerate: false,
    })
}

const RHO_LATTICE_EPS: f64 = 1e-9;

/// Two-sided p-value for an observed Spearman correlation at sample size `n`.
///
/// Dispatches to exact permutation enumeration for n <= 8 and to the
/// t-approximation `t = rho * sqrt((n-2) / (1-rho^2))` above that.
/// `|rho| = 1` maps to p = 0 and `rho = 0` to p = 1 by convention.
pub fn spearman_pvalue(rho: f64, n: usize) -> Result<f64, MetricsError> {
    check_pvalue_args(rho, n)?;
    if rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    if rho == 0.0 {
        return Ok(1.0);
    }
    if n <= 8 {
        spearman_pvalue_exact(rho, n)
    } else {
        spearman_pvalue_t(rho, n)
    }
}

/// t-approximation route, available at any n >= 4.
pub fn spearman_pvalue_t(rho: f64, n: usize) -> Result<f64, MetricsError> {
    check_pvalue_args(rho, n)?;
    if rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| MetricsError::InvalidInput(format!("t distribution: {e}")))?;
    Ok(2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Exact permutation route for 4 <= n <= 8: enumerates all n! rank
/// permutations against the identity ranking and returns the two-sided
/// mid-p value `Pr(|rho'| > |rho|) + Pr(|rho'| = |rho|) / 2`.
///
/// The mid-p convention is used because the permutation null is discrete;
/// the half-weight on the observed lattice point is what keeps the exact
/// route comparable to the continuous t-approximation.
pub fn spearman_pvalue_exact(rho: f64, n: usize) -> Result<f64, MetricsError> {
    check_pvalue_args(rho, n)?;
    if n > 8 {
        return Err(MetricsError::InvalidInput(format!(
            "exact enumeration supports n <= 8, got {n}"
        )));
    }
    if rho.abs() >= 1.0 {
        return Ok(0.0);
    }
    let target = rho.abs();
    let denom = (n * (n * n - 1)) as f64;
    let mut perm: Vec<usize> = (1..=n).collect();
    let mut greater = 0u64;
    let mut equal = 0u64;
    let mut total = 0u64;
    for_each_permutation(&mut perm, &mut |p| {
        let d2: usize = p
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = v as i64 - (i as i64 + 1);
                (d * d) as usize
            })
            .sum();
        let r = 1.0 - 6.0 * d2 as f64 / denom;
        let ar = r.abs();
        if ar > target + RHO_LATTICE_EPS {
            greater += 1;
        } else if (ar - target).abs() <= RHO_LATTICE_EPS {
            equal += 1;
        }
        total += 1;
    });
    Ok((greater as f64 + equal as f64 / 2.0) / total as f64)
}

fn check_pvalue_args(rho: f64, n: usize) -> Result<(), MetricsError> {
    if n < 4 {
        return Err(MetricsError::InvalidInput(format!(
            "p-value needs n >= 4, got {n}"
        )));
    }
    if !rho.is_finite() || rho.abs() > 1.0 + 1e-12 {
        return Err(MetricsError::InvalidInput(format!(
            "rho must lie in [-1, 1], got {rho}"
        )));
    }
    Ok(())
}

/// Heap's algorithm; visits every permutation of `items` exactly once.
fn for_each_permutation(items: &mut [usize], visit: &mut impl FnMut(&[usize])) {
    fn heap(k: usize, items: &mut [usize], visit: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            visit(items);
            return;
        }
        for i in 0..k {
            heap(k - 1, items, visit);
            if k.is_multiple_of(2) {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    heap(items.len(), items, visit);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: the sorted-cumulative-sum form of the Gini
    /// coefficient, kept deliberately separate from the pairwise route.
    fn gini_sorted_cumsum(wealth: &[f64]) -> f64 {
        let mut w = wealth.to_vec();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let n = w.len() as f64;
        let mut cumulative = 0.0;
        let mut cumsum_total = 0.0;
        for v in &w {
            cumulative += v;
            cumsum_total += cumulative;
        }
        (n + 1.0 - 2.0 * cumsum_total / total) / n
    }

    #[test]
    fn gini_perfect_equality() {
        assert_eq!(gini(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn gini_simple_vector() {
        let g = gini(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((g - 0.25).abs() < 1e-15);
        assert!((g - gini_sorted_cumsum(&[1.0, 2.0, 3.0, 4.0])).abs() < 1e-12);
    }

    #[test]
    fn gini_all_zero_guard() {
        assert_eq!(gini(&[0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn gini_rejects_single_agent() {
        assert!(gini(&[3.0]).is_err());
        assert!(gini(&[]).is_err());
    }

    #[test]
    fn gini_rejects_negative() {
        assert!(gini(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn gini_max_concentration_matches_closed_form() {
        for n in 2..=16usize {
            let mut counts = vec![0.0; n];
            counts[0] = 7.0;
            let expected = (n as f64 - 1.0) / n as f64;
            assert!((gini(&counts).unwrap() - expected).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn gini_matches_cumsum_oracle_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..=16);
            let counts: Vec<f64> = (0..n).map(|_| rng.gen_range(0..1000) as f64).collect();
            let a = gini(&counts).unwrap();
            let b = gini_sorted_cumsum(&counts);
            assert!((a - b).abs() < 1e-12, "counts {counts:?}");
        }
    }

    proptest! {
        #[test]
        fn gini_scale_invariant(counts in proptest::collection::vec(0u32..500, 2..12), k in 1u32..50) {
            let base: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let scaled: Vec<f64> = base.iter().map(|c| c * k as f64).collect();
            let a = gini(&base).unwrap();
            let b = gini(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn gini_permutation_invariant(counts in proptest::collection::vec(0u32..500, 2..12), seed in 0u64..1000) {
            let base: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let mut shuffled = base.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                let j = rng.gen_range(0..=i);
                shuffled.swap(i, j);
            }
            prop_assert!((gini(&base).unwrap() - gini(&shuffled).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn roi_direct_ratio() {
        assert_eq!(roi(&[1.0, 0.0, 1.0], &[0.2, 0.3, 0.5]).unwrap(), 2.0);
    }

    #[test]
    fn roi_zero_cost_guard() {
        assert_eq!(roi(&[], &[]).unwrap(), 0.0);
        assert_eq!(roi(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn roi_worked_cost_example() {
        // one reward over the 800-token / 7942.57 tok/s worked cost
        let r = roi(&[1.0], &[0.101]).unwrap();
        assert!((r - 9.90099009900990).abs() < 1e-10);
    }

    #[test]
    fn roi_rejects_bad_input() {
        assert!(roi(&[1.0], &[]).is_err());
        assert!(roi(&[-1.0], &[1.0]).is_err());
        assert!(roi(&[1.0], &[-0.5]).is_err());
    }

    proptest! {
        #[test]
        fn roi_order_invariant(pairs in proptest::collection::vec((0.0f64..10.0, 0.01f64..10.0), 1..20), seed in 0u64..1000) {
            let rewards: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let costs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mut shuffled = pairs.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                let j = rng.gen_range(0..=i);
                shuffled.swap(i, j);
            }
            let r2: Vec<f64> = shuffled.iter().map(|p| p.0).collect();
            let c2: Vec<f64> = shuffled.iter().map(|p| p.1).collect();
            let a = roi(&rewards, &costs).unwrap();
            let b = roi(&r2, &c2).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn swf_identity_and_annihilation() {
        assert_eq!(swf_score(1.0, 38.90), 38.90);
        assert_eq!(swf_score(0.0, 122.19), 0.0);
        assert!((swf_score(0.959, 38.90) - 37.3051).abs() < 1e-9);
    }

    #[test]
    fn snapshot_product_invariant() {
        let s = MetricSnapshot::new(7, 0.25, 40.0);
        assert_eq!(s.fairness, 0.75);
        assert_eq!(s.swf, s.fairness * s.roi);
    }

    #[test]
    fn aggregate_singleton_and_mean() {
        let one = vec![MetricSnapshot::new(1, 0.5, 40.0)];
        let agg = aggregate_runs(&one).unwrap();
        assert_eq!(agg.score, 20.0);
        assert_eq!(agg.fairness, 0.5);
        assert_eq!(agg.efficiency, 40.0);

        let two = vec![
            MetricSnapshot::new(1, 0.0, 10.0),
            MetricSnapshot::new(1, 0.0, 30.0),
        ];
        assert_eq!(aggregate_runs(&two).unwrap().score, 20.0);
        assert!(aggregate_runs(&[]).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_score_is_exact_mean_of_swf(ginis in proptest::collection::vec(0.0f64..1.0, 1..10), rois in proptest::collection::vec(0.0f64..100.0, 1..10)) {
            let snaps: Vec<MetricSnapshot> = ginis.iter().zip(rois.iter())
                .map(|(&g, &r)| MetricSnapshot::new(1, g, r))
                .collect();
            prop_assume!(!snaps.is_empty());
            let agg = aggregate_runs(&snaps).unwrap();
            let mean = snaps.iter().map(|s| s.swf).sum::<f64>() / snaps.len() as f64;
            prop_assert_eq!(agg.score, mean);
        }
    }

    #[test]
    fn spearman_identity_and_reversal() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert!((spearman(&x, &x).unwrap().rho - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &rev).unwrap().rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_tied_binary_vectors() {
        // mid-ranks (3.5, 3.5, 1.5, 1.5) vs (3.5, 1.5, 3.5, 1.5)
        let s = spearman(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.rho, 0.0);
        assert!(!s.degenerate);
    }

    #[test]
    fn spearman_constant_vector_is_degenerate() {
        let s = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.rho, 0.0);
        assert!(s.degenerate);
    }

    #[test]
    fn spearman_rejects_mismatch() {
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn spearman_symmetric(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..15)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = spearman(&x, &y).unwrap();
            let b = spearman(&y, &x).unwrap();
            prop_assert!((a.rho - b.rho).abs() < 1e-12);
        }

        #[test]
        fn spearman_affine_is_one(x in proptest::collection::vec(-100.0f64..100.0, 3..15), a in -5.0f64..5.0, b in 0.1f64..5.0) {
            let mut dedup = x.clone();
            dedup.sort_by(|p, q| p.partial_cmp(q).unwrap());
            dedup.dedup();
            prop_assume!(dedup.len() == x.len());
            let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            prop_assert!((spearman(&x, &y).unwrap().rho - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pvalue_conventions() {
        assert_eq!(spearman_pvalue(0.0, 12).unwrap(), 1.0);
        assert_eq!(spearman_pvalue(1.0, 12).unwrap(), 0.0);
        assert_eq!(spearman_pvalue(-1.0, 12).unwrap(), 0.0);
        assert!(spearman_pvalue(0.5, 3).is_err());
    }

    #[test]
    fn pvalue_table_stars_at_n12() {
        // the starred correlations at n = 12 recipient agents
        assert!(spearman_pvalue(0.801, 12).unwrap() < 0.05);
        assert!(spearman_pvalue(0.737, 12).unwrap() < 0.05);
        // an unstarred one stays above the threshold
        assert!(spearman_pvalue(0.436, 12).unwrap() >= 0.05);
    }

    #[test]
    fn pvalue_exact_bounds() {
        assert!(spearman_pvalue_exact(0.5, 9).is_err());
        let p = spearman_pvalue_exact(0.5, 6).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn pvalue_exact_monotone_in_rho() {
        let mut last = 1.1;
        for rho in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let p = spearman_pvalue_exact(rho, 8).unwrap();
            assert!(p < last, "p should shrink as rho grows");
            last = p;
        }
    }
}
