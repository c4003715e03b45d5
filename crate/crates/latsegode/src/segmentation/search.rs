//! Optimal partitioning and PELT.
//!
//! Both searches minimize Σᵢ C(segmentᵢ) + β per segment with F(0) = −β, so
//! the reported objective is Σ C + m·β for m changepoints. PELT runs the
//! identical recursion over a pruned candidate set: a candidate survives while
//! its extension stays within K of the incumbent optimum, so K = +∞ disables
//! pruning entirely and recovers the exact search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::cost::CostFunction;
use super::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeltConfig {
    /// Per-segment penalty β ≥ 0.
    pub beta: f64,
    /// Pruning constant K ≥ 0; `f64::INFINITY` disables pruning.
    #[serde(with = "k_serde")]
    pub pruning_k: f64,
    pub min_segment_len: usize,
    /// Decimal places for rounding decode query times inside segment costs
    /// (consumed by [`MarginalCost`](super::MarginalCost) construction).
    pub time_round_decimals: Option<u32>,
}

/// JSON has no ±inf; an unbounded K round-trips as the string "inf".
mod k_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &f64, s: S) -> Result<S::Ok, S::Error> {
        if k.is_finite() {
            s.serialize_f64(*k)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(s) if s.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Default for PeltConfig {
    fn default() -> Self {
        PeltConfig {
            beta: 0.0,
            pruning_k: 100.0,
            min_segment_len: 20,
            time_round_decimals: Some(2),
        }
    }
}

impl PeltConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::invalid("beta must be >= 0"));
        }
        if self.pruning_k < 0.0 {
            return Err(Error::invalid("pruning constant K must be >= 0"));
        }
        if self.min_segment_len < 1 {
            return Err(Error::invalid("minimum segment length must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Cost-function invocations issued by the dynamic program.
    pub cost_evaluations: usize,
    /// Candidates removed by the pruning rule (always 0 for the exact search).
    pub pruned_candidates: usize,
    /// Largest candidate-set size reached.
    pub max_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub segmentation: Segmentation,
    /// Σ C(segment) + β per segment (with F(0) = −β).
    pub objective: f64,
    pub stats: SearchStats,
}

/// DP state shared by both searches. Positions p ∈ 0..=n count consumed
/// observations; a boundary at position p > 0 means data index p − 1 ends a
/// segment.
struct DpState {
    f: Vec<f64>,
    back: Vec<usize>,
    n_cp: Vec<usize>,
}

impl DpState {
    fn new(n: usize, beta: f64) -> Self {
        let mut f = vec![f64::INFINITY; n + 1];
        f[0] = -beta;
        DpState { f, back: vec![usize::MAX; n + 1], n_cp: vec![0; n + 1] }
    }

    /// Reconstruct interior boundary positions for position `p`.
    fn path(&self, p: usize) -> Vec<usize> {
        let mut cps = Vec::new();
        let mut cur = p;
        while cur != 0 {
            let prev = self.back[cur];
            if prev != 0 {
                cps.push(prev);
            }
            cur = prev;
        }
        cps.reverse();
        cps
    }

    /// True when extending from `q` improves position `p` under the
    /// objective-then-fewest-changepoints-then-lexicographic order.
    fn improves(&self, p: usize, q: usize, total: f64) -> bool {
        if total < self.f[p] {
            return true;
        }
        if total > self.f[p] || self.f[p].is_infinite() {
            return false;
        }
        // exact tie on objective: prefer fewer changepoints
        let cand_cp = self.n_cp[q] + usize::from(q != 0);
        let inc_cp = self.n_cp[p];
        if cand_cp != inc_cp {
            return cand_cp < inc_cp;
        }
        // then the lexicographically smallest changepoint sequence
        let mut cand_path = self.path(q);
        if q != 0 {
            cand_path.push(q);
        }
        let inc_path = self.path(p);
        cand_path < inc_path
    }

    fn commit(&mut self, p: usize, q: usize, total: f64) {
        self.f[p] = total;
        self.back[p] = q;
        self.n_cp[p] = self.n_cp[q] + usize::from(q != 0);
    }

    fn finish(self, n: usize, stats: SearchStats) -> Result<SearchOutcome> {
        if !self.f[n].is_finite() {
            return Err(Error::invalid(
                "no feasible segmentation: trajectory shorter than the minimum segment length",
            ));
        }
        let cps: Vec<usize> = self.path(n).into_iter().map(|pos| pos - 1).collect();
        Ok(SearchOutcome {
            segmentation: Segmentation::new(cps, n)?,
            objective: self.f[n],
            stats,
        })
    }
}

fn effective_min_len(cost: &dyn CostFunction, requested: usize) -> usize {
    requested.max(cost.min_segment_len()).max(1)
}

/// Exact minimization over all segmentations by the O(n²) recursion
/// F(p) = min_q F(q) + C(q+1..p) + β.
pub fn optimal_partition(
    values: &[Vec<f64>],
    times: &[f64],
    cost: &dyn CostFunction,
    beta: f64,
    min_segment_len: usize,
) -> Result<SearchOutcome> {
    let n = values.len();
    let min_len = effective_min_len(cost, min_segment_len);
    if n < min_len {
        return Err(Error::invalid(format!(
            "trajectory length {n} is below the minimum segment length {min_len}"
        )));
    }
    if beta < 0.0 {
        return Err(Error::invalid("beta must be >= 0"));
    }

    let mut dp = DpState::new(n, beta);
    let mut stats = SearchStats::default();
    for p in min_len..=n {
        for q in 0..=(p - min_len) {
            if !dp.f[q].is_finite() {
                continue;
            }
            let c = cost.cost(values, times, q, p - 1)?;
            stats.cost_evaluations += 1;
            let total = dp.f[q] + c + beta;
            if dp.improves(p, q, total) {
                dp.commit(p, q, total);
            }
        }
    }
    stats.max_candidates = n;
    dp.finish(n, stats)
}

/// PELT: the optimal-partitioning recursion restricted to a candidate set
/// that drops τ once `F(τ) + C(τ+1..τ*) > F(τ*) + K`. The just-computed τ*
/// always joins the set, so it is never empty.
pub fn pelt_segment(
    values: &[Vec<f64>],
    times: &[f64],
    cost: &dyn CostFunction,
    config: &PeltConfig,
) -> Result<SearchOutcome> {
    config.validate()?;
    let n = values.len();
    let min_len = effective_min_len(cost, config.min_segment_len);
    if n < min_len {
        return Err(Error::invalid(format!(
            "trajectory length {n} is below the minimum segment length {min_len}"
        )));
    }

    let mut dp = DpState::new(n, config.beta);
    let mut stats = SearchStats::default();
    let mut candidates: Vec<usize> = vec![0];
    let mut seg_costs: Vec<(usize, f64)> = Vec::new();

    for p in 1..=n {
        seg_costs.clear();
        for &q in &candidates {
            if p < q + min_len || !dp.f[q].is_finite() {
                continue;
            }
            let c = cost.cost(values, times, q, p - 1)?;
            stats.cost_evaluations += 1;
            seg_costs.push((q, c));
            let total = dp.f[q] + c + config.beta;
            if dp.improves(p, q, total) {
                dp.commit(p, q, total);
            }
        }

        if dp.f[p].is_finite() && config.pruning_k.is_finite() {
            let threshold = dp.f[p] + config.pruning_k;
            let before = candidates.len();
            let evaluated: std::collections::HashMap<usize, f64> =
                seg_costs.iter().copied().collect();
            candidates.retain(|&q| match evaluated.get(&q) {
                // keep while the extension stays within K of the incumbent
                Some(&c) => dp.f[q] + c <= threshold,
                // not evaluable yet (min length) — cannot be pruned
                None => true,
            });
            stats.pruned_candidates += before - candidates.len();
        }

        if dp.f[p].is_finite() {
            candidates.push(p);
        }
        stats.max_candidates = stats.max_candidates.max(candidates.len());
        debug_assert!(!candidates.is_empty(), "candidate set must never be empty");
    }

    dp.finish(n, stats)
}

#[cfg(test)]
mod tests {
    use super::super::cost::TableCost;
    use super::*;
    use crate::baselines::NormCost;
    use crate::rng;
    use rand::Rng as _;

    /// Brute-force minimum over all 2^(n−1) segmentations.
    pub(crate) fn brute_force(
        values: &[Vec<f64>],
        times: &[f64],
        cost: &dyn CostFunction,
        beta: f64,
        min_len: usize,
    ) -> (Vec<usize>, f64) {
        let n = values.len();
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        // enumerate boundary bitmasks over positions 1..n-1
        let m = n - 1;
        for mask in 0u32..(1 << m) {
            let mut cps = Vec::new();
            for b in 0..m {
                if mask & (1 << b) != 0 {
                    cps.push(b + 1); // position
                }
            }
            let mut ok = true;
            let mut prev = 0usize;
            let mut total = 0.0;
            let mut segments = 0usize;
            for &pos in cps.iter().chain(std::iter::once(&n)) {
                if pos - prev < min_len {
                    ok = false;
                    break;
                }
                total += cost.cost(values, times, prev, pos - 1).unwrap();
                segments += 1;
                prev = pos;
            }
            if !ok {
                continue;
            }
            let obj = total + beta * (segments - 1) as f64;
            let key = (obj, cps.len(), cps.clone());
            let better = match &best {
                None => true,
                Some((bo, bc, bp)) => {
                    obj < *bo
                        || (obj == *bo && (cps.len() < *bc || (cps.len() == *bc && &key.2 < bp)))
                }
            };
            if better {
                best = Some((obj, cps.len(), cps));
            }
        }
        let (obj, _, cps) = best.expect("some segmentation is feasible");
        (cps.into_iter().map(|p| p - 1).collect(), obj)
    }

    fn random_instance(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = rng::rng_from_seed(seed);
        let values = (0..n).map(|_| vec![r.random_range(-2.0..2.0)]).collect();
        let times = (0..n).map(|i| i as f64).collect();
        (values, times)
    }

    #[test]
    fn constant_cost_with_penalty_yields_zero_changepoints() {
        let (values, times) = random_instance(1, 10);
        let cost = TableCost::constant(1.0, 1);
        let out = optimal_partition(&values, &times, &cost, 0.5, 1).unwrap();
        assert!(out.segmentation.changepoints().is_empty());
    }

    #[test]
    fn norm_cost_step_data_splits_at_the_step() {
        // [0,0,0,5,5,5] with the Gaussian cost, min length 2, β = 1
        let values: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0].iter().map(|&x| vec![x]).collect();
        let times: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let cost = NormCost::new(1);
        let out = optimal_partition(&values, &times, &cost, 1.0, 2).unwrap();
        assert_eq!(out.segmentation.changepoints(), &[2]);
        let (bf_cps, bf_obj) = brute_force(&values, &times, &cost, 1.0, 2);
        assert_eq!(out.segmentation.changepoints(), bf_cps.as_slice());
        assert_eq!(out.objective, bf_obj);
    }

    #[test]
    fn zero_penalty_subadditive_cost_splits_everywhere() {
        // cost(len) = len² is strictly subadditive in the minimization sense
        let (values, times) = random_instance(2, 8);
        let cost = TableCost::from_fn(8, 1, |s, e| ((e - s + 1) * (e - s + 1)) as f64);
        let out = optimal_partition(&values, &times, &cost, 0.0, 1).unwrap();
        assert_eq!(out.segmentation.changepoints(), &[0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn exactness_against_brute_force_random_tables() {
        for seed in 0..40 {
            let mut r = rng::rng_from_seed(900 + seed);
            let n = r.random_range(4..=12);
            let (values, times) = random_instance(seed, n);
            let min_len = r.random_range(1..=2);
            let beta = r.random_range(0.0..2.0);
            let cost = TableCost::random(n, min_len, 1000 + seed);
            let out = optimal_partition(&values, &times, &cost, beta, min_len).unwrap();
            let (bf_cps, bf_obj) = brute_force(&values, &times, &cost, beta, min_len);
            assert_eq!(out.segmentation.changepoints(), bf_cps.as_slice(), "seed {seed}");
            assert!((out.objective - bf_obj).abs() <= 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn pelt_without_pruning_matches_optimal_partition() {
        for seed in 0..60 {
            let mut r = rng::rng_from_seed(2000 + seed);
            let n = r.random_range(5..=40);
            let (values, times) = random_instance(300 + seed, n);
            let beta = r.random_range(0.0..1.0);
            let cost = TableCost::random(n, 1, 3000 + seed);
            let exact = optimal_partition(&values, &times, &cost, beta, 1).unwrap();
            let config = PeltConfig {
                beta,
                pruning_k: f64::INFINITY,
                min_segment_len: 1,
                time_round_decimals: None,
            };
            let pelt = pelt_segment(&values, &times, &cost, &config).unwrap();
            assert_eq!(
                pelt.segmentation.changepoints(),
                exact.segmentation.changepoints(),
                "seed {seed}"
            );
            assert_eq!(pelt.objective, exact.objective, "seed {seed}");
            assert_eq!(pelt.stats.pruned_candidates, 0);
        }
    }

    #[test]
    fn pelt_objective_never_beats_optimal() {
        for seed in 0..30 {
            let (values, times) = random_instance(70 + seed, 24);
            let cost = TableCost::random(24, 2, 500 + seed);
            let exact = optimal_partition(&values, &times, &cost, 0.3, 2).unwrap();
            for k in [0.0, 0.5, 2.0, 10.0] {
                let config = PeltConfig {
                    beta: 0.3,
                    pruning_k: k,
                    min_segment_len: 2,
                    time_round_decimals: None,
                };
                let pelt = pelt_segment(&values, &times, &cost, &config).unwrap();
                assert!(
                    pelt.objective >= exact.objective - 1e-12,
                    "seed {seed} K {k}: pelt {} < exact {}",
                    pelt.objective,
                    exact.objective
                );
            }
        }
    }

    #[test]
    fn stronger_pruning_never_improves_objective() {
        for seed in 0..20 {
            let (values, times) = random_instance(170 + seed, 30);
            let cost = TableCost::random(30, 2, 700 + seed);
            let mut prev_obj = f64::INFINITY;
            let mut prev_pruned = usize::MAX;
            for k in [0.0, 0.5, 1.0, 5.0, 50.0] {
                let config = PeltConfig {
                    beta: 0.2,
                    pruning_k: k,
                    min_segment_len: 2,
                    time_round_decimals: None,
                };
                let out = pelt_segment(&values, &times, &cost, &config).unwrap();
                assert!(out.objective <= prev_obj + 1e-12, "seed {seed} K {k}");
                assert!(out.stats.pruned_candidates <= prev_pruned, "seed {seed} K {k}");
                prev_obj = out.objective;
                prev_pruned = out.stats.pruned_candidates;
            }
        }
    }

    #[test]
    fn min_segment_length_respected_everywhere() {
        for seed in 0..20 {
            let (values, times) = random_instance(50 + seed, 17);
            let cost = TableCost::random(17, 1, 60 + seed);
            let config = PeltConfig {
                beta: 0.0,
                pruning_k: f64::INFINITY,
                min_segment_len: 4,
                time_round_decimals: None,
            };
            let out = pelt_segment(&values, &times, &cost, &config).unwrap();
            assert!(out.segmentation.min_segment_len(17) >= 4, "seed {seed}");
        }
    }

    #[test]
    fn too_short_trajectory_is_invalid() {
        let (values, times) = random_instance(3, 5);
        let cost = TableCost::random(5, 1, 4);
        assert!(optimal_partition(&values, &times, &cost, 0.0, 6).is_err());
        let config =
            PeltConfig { beta: 0.0, pruning_k: 1.0, min_segment_len: 6, time_round_decimals: None };
        assert!(pelt_segment(&values, &times, &cost, &config).is_err());
    }

    #[test]
    fn ties_prefer_fewest_changepoints() {
        // every segment costs 0 and β = 0: all segmentations tie at 0; the
        // tie-break must return the single-segment solution
        let (values, times) = random_instance(4, 7);
        let cost = TableCost::constant(0.0, 1);
        let out = optimal_partition(&values, &times, &cost, 0.0, 1).unwrap();
        assert!(out.segmentation.changepoints().is_empty());
        let config =
            PeltConfig { beta: 0.0, pruning_k: f64::INFINITY, min_segment_len: 1, time_round_decimals: None };
        let pelt = pelt_segment(&values, &times, &cost, &config).unwrap();
        assert!(pelt.segmentation.changepoints().is_empty());
    }
}
