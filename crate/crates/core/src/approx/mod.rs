//! Budget-limited estimates of family-level performance.
//!
//! With a budget of `N` trainable models out of `M` family members, three
//! estimators pick which members to evaluate and how to weight them:
//!
//! * [`estimate_m1`] draws `N` members i.i.d. from `p` and averages their scores.
//! * [`estimate_m2`] draws `N` distinct members, proportionally to `p` with the
//!   residual mass renormalized after each draw, and weights them by
//!   `p_i / sum_X p`.
//! * [`estimate_m3`] clusters the standardized context vectors into `N` groups,
//!   gives each cluster's total mass to the member nearest its centroid, and
//!   sums mass times score over those representatives.
//!
//! Scores come from a [`ScoresProvider`], so only selected members are ever
//! evaluated when the provider is lazy.

pub mod kmeans;
pub mod synthetic;

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, standardize, KMeansConfig, KMeansResult};

use crate::family::{ImportanceDistribution, MdpFamily};
use crate::par::{self, Execution};
use crate::{seed, Error, Result};

/// Source of normalized per-point scores `s_i`.
pub trait ScoresProvider: Sync {
    fn family_size(&self) -> usize;
    fn score(&self, index: usize) -> Result<f64>;
}

impl ScoresProvider for [f64] {
    fn family_size(&self) -> usize {
        self.len()
    }

    fn score(&self, index: usize) -> Result<f64> {
        self.get(index)
            .copied()
            .ok_or_else(|| Error::SizeMismatch(format!("no score for point {index}")))
    }
}

impl ScoresProvider for Vec<f64> {
    fn family_size(&self) -> usize {
        self.len()
    }

    fn score(&self, index: usize) -> Result<f64> {
        self.as_slice().score(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    M1,
    M2,
    M3,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::M1, Estimator::M2, Estimator::M3];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::M1 => "m1",
            Estimator::M2 => "m2",
            Estimator::M3 => "m3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetPlan {
    /// Models that may be trained (`N`).
    pub budget: usize,
    pub repetitions: usize,
    pub rng_seed: u64,
    pub exec: Execution,
}

impl BudgetPlan {
    pub fn new(budget: usize, repetitions: usize, rng_seed: u64) -> Self {
        Self {
            budget,
            repetitions,
            rng_seed,
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn validate(&self, family_size: usize) -> Result<()> {
        if self.budget == 0 || self.budget > family_size {
            return Err(Error::InvalidPlan(format!(
                "budget {} outside [1, {family_size}]",
                self.budget
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidPlan("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// One repetition of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repetition {
    pub value: f64,
    /// Drawn indices (with multiplicity for M1, in draw order) or the
    /// selected subset in ascending order.
    pub selected: Vec<usize>,
    /// `q_hat` (M2) or `q_star` (M3) aligned with `selected`; empty for M1.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub estimator: Estimator,
    pub budget: usize,
    /// Mean of the repetition values.
    pub value: f64,
    /// Sample std over repetitions; 0 with `single_repetition` set when there is one.
    pub dispersion: f64,
    pub single_repetition: bool,
    pub repetitions: Vec<Repetition>,
    pub warnings: Vec<String>,
}

fn summarize(estimator: Estimator, budget: usize, reps: Vec<Repetition>, warnings: Vec<String>) -> Estimate {
    let values: Vec<f64> = reps.iter().map(|r| r.value).collect();
    let (value, dispersion) = mean_std(&values);
    Estimate {
        estimator,
        budget,
        value,
        dispersion,
        single_repetition: reps.len() == 1,
        repetitions: reps,
        warnings,
    }
}

/// Mean and sample standard deviation (0 for a single value). Identical
/// values give exactly that value and zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if let Some(&first) = xs.first() {
        if xs.iter().all(|&x| x == first) {
            return (first, 0.0);
        }
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_inputs(
    provider: &(impl ScoresProvider + ?Sized),
    dist: &ImportanceDistribution,
    plan: &BudgetPlan,
) -> Result<()> {
    if provider.family_size() != dist.family_size() {
        return Err(Error::SizeMismatch(format!(
            "{} scores for a distribution over {}",
            provider.family_size(),
            dist.family_size()
        )));
    }
    plan.validate(dist.family_size())
}

fn repetitions<F>(plan: &BudgetPlan, label: &str, f: F) -> Result<Vec<Repetition>>
where
    F: Fn(u64) -> Result<Repetition> + Sync + Send,
{
    par::map_range(plan.exec, plan.repetitions, |r| {
        f(seed::derive_indexed(plan.rng_seed, label, r as u64))
    })
    .into_iter()
    .collect()
}

/// Sampling with replacement; the estimate is the mean score over the draws.
pub fn estimate_m1(
    provider: &(impl ScoresProvider + ?Sized),
    dist: &ImportanceDistribution,
    plan: &BudgetPlan,
) -> Result<Estimate> {
    check_inputs(provider, dist, plan)?;
    let sampler = WeightedIndex::new(dist.mass()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let reps = repetitions(plan, "m1", |s| {
        let mut rng = seed::rng(s);
        let selected: Vec<usize> = (0..plan.budget).map(|_| sampler.sample(&mut rng)).collect();
        let unique: BTreeSet<usize> = selected.iter().copied().collect();
        let scores = unique
            .iter()
            .map(|&i| provider.score(i).map(|v| (i, v)))
            .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
        let total: f64 = selected.iter().map(|i| scores[i]).sum();
        Ok(Repetition {
            value: total / plan.budget as f64,
            selected,
            weights: Vec::new(),
        })
    })?;
    Ok(summarize(Estimator::M1, plan.budget, reps, Vec::new()))
}

/// Draws `n` distinct indices, each proportionally to the mass not yet drawn.
pub fn sample_without_replacement(mass: &[f64], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..mass.len()).filter(|&i| mass[i] > 0.0).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| mass[i]).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pos = remaining.len() - 1;
        for (k, &i) in remaining.iter().enumerate() {
            acc += mass[i];
            if u < acc {
                pos = k;
                break;
            }
        }
        out.push(remaining.remove(pos));
    }
    out.sort_unstable();
    out
}

/// Weighted sum over a subset with the subset's masses renormalized to one.
pub fn renormalized_sum(subset: &[usize], mass: &[f64], scores: &[f64]) -> (f64, Vec<f64>) {
    let total: f64 = subset.iter().map(|&i| mass[i]).sum();
    let q: Vec<f64> = subset.iter().map(|&i| mass[i] / total).collect();
    (q.iter().zip(scores).map(|(q, s)| q * s).sum(), q)
}

/// Sampling without replacement with renormalized weights.
pub fn estimate_m2(
    provider: &(impl ScoresProvider + ?Sized),
    dist: &ImportanceDistribution,
    plan: &BudgetPlan,
) -> Result<Estimate> {
    check_inputs(provider, dist, plan)?;
    let positive = dist.mass().iter().filter(|&&p| p > 0.0).count();
    let mut warnings = Vec::new();
    if positive < plan.budget {
        let w = format!(
            "only {positive} points carry mass; sampling all of them instead of {}",
            plan.budget
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    let reps = repetitions(plan, "m2", |s| {
        let mut rng = seed::rng(s);
        let selected = sample_without_replacement(dist.mass(), plan.budget, &mut rng);
        let scores = selected
            .iter()
            .map(|&i| provider.score(i))
            .collect::<Result<Vec<_>>>()?;
        let (value, weights) = renormalized_sum(&selected, dist.mass(), &scores);
        Ok(Repetition {
            value,
            selected,
            weights,
        })
    })?;
    Ok(summarize(Estimator::M2, plan.budget, reps, warnings))
}

/// Representatives chosen by clustering, with their cluster masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Representatives {
    /// Matched member per cluster, in cluster order.
    pub members: Vec<usize>,
    /// Total mass of each cluster.
    pub mass: Vec<f64>,
    pub assignments: Vec<usize>,
    pub converged: bool,
}

/// Matches each centroid to a distinct nearest member. A centroid whose
/// nearest member is already taken moves on to its next-nearest free member;
/// centroids are processed in order.
pub fn match_centroids(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    let mut used = vec![false; points.len()];
    let mut members = Vec::with_capacity(centroids.len());
    for c in centroids {
        let mut order: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (kmeans::squared_distance(p, c), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let pick = order
            .into_iter()
            .map(|(_, i)| i)
            .find(|&i| !used[i])
            .expect("no more centroids than members");
        used[pick] = true;
        members.push(pick);
    }
    members
}

/// Clusters the family's standardized context vectors into `k` groups and
/// matches the centroids to members with [`match_centroids`].
pub fn select_representatives(
    points: &[Vec<f64>],
    mass: &[f64],
    k: usize,
    config: &KMeansConfig,
    rng_seed: u64,
) -> Result<Representatives> {
    let km = kmeans(points, k, config, rng_seed)?;
    let mut cluster_mass = vec![0.0; k];
    for (i, &a) in km.assignments.iter().enumerate() {
        cluster_mass[a] += mass[i];
    }
    let members = match_centroids(points, &km.centroids);
    Ok(Representatives {
        members,
        mass: cluster_mass,
        assignments: km.assignments,
        converged: km.converged,
    })
}

/// k-means representatives with aggregated cluster masses.
pub fn estimate_m3(
    family: &MdpFamily,
    dist: &ImportanceDistribution,
    provider: &(impl ScoresProvider + ?Sized),
    plan: &BudgetPlan,
    config: &KMeansConfig,
) -> Result<Estimate> {
    check_inputs(provider, dist, plan)?;
    if family.size() != dist.family_size() {
        return Err(Error::SizeMismatch(format!(
            "family of {} with a distribution over {}",
            family.size(),
            dist.family_size()
        )));
    }
    let taus: Vec<Vec<f64>> = family.members().iter().map(|m| m.tau.clone()).collect();
    let (points, dropped) = standardize(&taus);
    let warnings: Vec<String> = dropped
        .iter()
        .map(|&c| {
            let w = format!(
                "feature `{}` has zero variance and is ignored for clustering",
                family.feature_names()[c]
            );
            log::warn!("{w}");
            w
        })
        .collect();
    let reps = repetitions(plan, "m3", |s| {
        let reps = select_representatives(&points, dist.mass(), plan.budget, config, s)?;
        let mut pairs: Vec<(usize, f64)> = reps.members.iter().copied().zip(reps.mass.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        let mut value = 0.0;
        for &(i, q) in &pairs {
            value += q * provider.score(i)?;
        }
        Ok(Repetition {
            value,
            selected: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    })?;
    Ok(summarize(Estimator::M3, plan.budget, reps, warnings))
}

pub fn estimate(
    estimator: Estimator,
    family: &MdpFamily,
    dist: &ImportanceDistribution,
    provider: &(impl ScoresProvider + ?Sized),
    plan: &BudgetPlan,
    config: &KMeansConfig,
) -> Result<Estimate> {
    match estimator {
        Estimator::M1 => estimate_m1(provider, dist, plan),
        Estimator::M2 => estimate_m2(provider, dist, plan),
        Estimator::M3 => estimate_m3(family, dist, provider, plan, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub estimator: Estimator,
    pub budget: usize,
    pub mean: f64,
    pub std: f64,
    pub single_repetition: bool,
    /// Exact family performance, when known.
    pub exact: Option<f64>,
    /// Mean over repetitions of `|estimate - exact|`.
    pub mean_abs_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDetail {
    pub estimator: Estimator,
    pub budget: usize,
    pub repetition: usize,
    pub value: f64,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub details: Vec<SweepDetail>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub estimators: Vec<Estimator>,
    pub budgets: Vec<usize>,
    pub repetitions: usize,
    pub rng_seed: u64,
    pub kmeans: KMeansConfig,
    pub exec: Execution,
}

/// Every estimator at every budget, with the exact value as reference line.
pub fn budget_sweep(
    family: &MdpFamily,
    dist: &ImportanceDistribution,
    provider: &(impl ScoresProvider + ?Sized),
    config: &SweepConfig,
    exact: Option<f64>,
) -> Result<Sweep> {
    for &b in &config.budgets {
        BudgetPlan::new(b, config.repetitions, 0).validate(family.size())?;
    }
    let mut sweep = Sweep::default();
    for &est in &config.estimators {
        for &b in &config.budgets {
            let plan = BudgetPlan {
                budget: b,
                repetitions: config.repetitions,
                rng_seed: seed::derive(config.rng_seed, &format!("{}/{b}", est.as_str())),
                exec: config.exec,
            };
            let e = estimate(est, family, dist, provider, &plan, &config.kmeans)?;
            let mae = exact
                .map(|x| e.repetitions.iter().map(|r| (r.value - x).abs()).sum::<f64>() / e.repetitions.len() as f64);
            sweep.rows.push(SweepRow {
                estimator: est,
                budget: b,
                mean: e.value,
                std: e.dispersion,
                single_repetition: e.single_repetition,
                exact,
                mean_abs_error: mae,
            });
            for (r, rep) in e.repetitions.into_iter().enumerate() {
                sweep.details.push(SweepDetail {
                    estimator: est,
                    budget: b,
                    repetition: r,
                    value: rep.value,
                    selected: rep.selected,
                });
            }
            for w in e.warnings {
                if !sweep.warnings.contains(&w) {
                    sweep.warnings.push(w);
                }
            }
        }
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::weighted_sum;
    use crate::family::random_of;
    use proptest::prelude::*;
    use rand::Rng;

    fn line_family(m: usize) -> MdpFamily {
        MdpFamily::explicit("synthetic", vec!["x".into()], (0..m).map(|i| vec![i as f64]).collect()).unwrap()
    }

    #[test]
    fn m1_point_mass() {
        let dist = ImportanceDistribution::point_mass(4, 0).unwrap();
        let s = vec![0.7, 1.0, 2.0, 3.0];
        let e = estimate_m1(&s, &dist, &BudgetPlan::new(4, 3, 1)).unwrap();
        assert_eq!(e.value, 0.7);
        assert!(e.repetitions.iter().all(|r| r.selected == vec![0; 4]));
    }

    #[test]
    fn m2_worked_example() {
        let (v, q) = renormalized_sum(&[0, 1], &[0.5, 0.25, 0.25], &[1.0, 2.0]);
        assert_eq!(q, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn m2_is_seeded() {
        let d = random_of(30, 4);
        let s: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let a = estimate_m2(&s, &d, &BudgetPlan::new(7, 2, 9)).unwrap();
        let b = estimate_m2(&s, &d, &BudgetPlan::new(7, 2, 9).with_execution(Execution::Sequential)).unwrap();
        assert_eq!(a, b);
        assert!(a.repetitions.iter().all(|r| r.selected.len() == 7));
    }

    #[test]
    fn m2_short_support_warns() {
        let d = ImportanceDistribution::explicit(vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let e = estimate_m2(&vec![1.0, 5.0, 3.0, 5.0], &d, &BudgetPlan::new(3, 1, 0)).unwrap();
        assert_eq!(e.repetitions[0].selected, vec![0, 2]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.warnings.len(), 1);
        assert!(e.single_repetition && e.dispersion == 0.0);
    }

    #[test]
    fn m3_single_cluster_takes_all_mass() {
        let f = line_family(5);
        let d = random_of(5, 2);
        let s = vec![10.0, 20.0, 30.0, 40.0, 50.0];
        let e = estimate_m3(&f, &d, &s, &BudgetPlan::new(1, 1, 0), &KMeansConfig::default()).unwrap();
        assert_eq!(e.repetitions[0].selected, vec![2]);
        assert!((e.repetitions[0].weights[0] - 1.0).abs() < 1e-15);
        assert!((e.value - 30.0).abs() < 1e-12);
    }

    #[test]
    fn centroid_collision_moves_to_next_free_member() {
        let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
        assert_eq!(match_centroids(&pts, &[vec![0.1], vec![-0.1]]), vec![1, 0]);
        assert_eq!(match_centroids(&pts, &[vec![0.0], vec![0.0], vec![0.0]]), vec![1, 0, 2]);
    }

    #[test]
    fn repetitions_of_one_flag_zero_std() {
        let (m, s) = mean_std(&[3.0]);
        assert_eq!((m, s), (3.0, 0.0));
    }

    #[test]
    fn sweep_rejects_oversized_budget() {
        let f = line_family(4);
        let d = random_of(4, 0);
        let cfg = SweepConfig {
            estimators: vec![Estimator::M1],
            budgets: vec![5],
            repetitions: 1,
            rng_seed: 0,
            kmeans: KMeansConfig::default(),
            exec: Execution::Sequential,
        };
        assert!(matches!(
            budget_sweep(&f, &d, &vec![0.0; 4], &cfg, None),
            Err(Error::InvalidPlan(_))
        ));
    }

    #[test]
    fn full_budget_sweep_has_no_dispersion_for_m2_m3() {
        let f = line_family(12);
        let d = random_of(12, 5);
        let s: Vec<f64> = (0..12).map(|i| (i as f64).sin() + 2.0).collect();
        let (exact, _) = weighted_sum(&s, d.mass()).unwrap();
        let cfg = SweepConfig {
            estimators: Estimator::ALL.to_vec(),
            budgets: vec![12],
            repetitions: 5,
            rng_seed: 3,
            kmeans: KMeansConfig::default(),
            exec: Execution::Parallel,
        };
        let sw = budget_sweep(&f, &d, &s, &cfg, Some(exact)).unwrap();
        for row in &sw.rows[1..] {
            assert_eq!(row.std, 0.0);
            assert!((row.mean - exact).abs() <= 1e-12 * exact.abs());
        }
        assert_eq!(sw.details.len(), 15);
    }

    proptest! {
        #[test]
        fn exact_recovery(m in 1usize..40, seed in any::<u64>()) {
            let f = line_family(m);
            let d = random_of(m, seed);
            let mut rng = crate::seed::rng(seed ^ 1);
            let s: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (exact, _) = weighted_sum(&s, d.mass()).unwrap();
            let plan = BudgetPlan::new(m, 1, seed);
            let tol = 1e-12 * exact.abs().max(1e-300) + 1e-15;
            let m2 = estimate_m2(&s, &d, &plan).unwrap();
            prop_assert!((m2.value - exact).abs() <= tol);
            let m3 = estimate_m3(&f, &d, &s, &plan, &KMeansConfig::default()).unwrap();
            prop_assert!((m3.value - exact).abs() <= tol);
        }

        #[test]
        fn weights_sum_to_one(m in 2usize..30, n in 1usize..30, seed in any::<u64>()) {
            let n = n.min(m);
            let f = line_family(m);
            let d = random_of(m, seed);
            let s = vec![1.0; m];
            let plan = BudgetPlan::new(n, 2, seed);
            for e in [estimate_m2(&s, &d, &plan).unwrap(), estimate_m3(&f, &d, &s, &plan, &KMeansConfig::default()).unwrap()] {
                for r in &e.repetitions {
                    prop_assert_eq!(r.selected.len(), n);
                    prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
            let m1 = estimate_m1(&s, &d, &plan).unwrap();
            prop_assert!(m1.repetitions.iter().all(|r| r.selected.len() == n));
        }

        #[test]
        fn m2_uniform_mass_gives_uniform_weights(m in 2usize..30, seed in any::<u64>()) {
            let d = crate::family::uniform_of(m);
            let n = m / 2;
            let e = estimate_m2(&vec![0.0; m], &d, &BudgetPlan::new(n, 1, seed)).unwrap();
            for q in &e.repetitions[0].weights {
                prop_assert!((q - 1.0 / n as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn m3_conserves_mass(m in 2usize..30, k in 1usize..30, seed in any::<u64>()) {
            let k = k.min(m);
            let f = line_family(m);
            let d = random_of(m, seed);
            let taus: Vec<Vec<f64>> = f.members().iter().map(|p| p.tau.clone()).collect();
            let (pts, _) = standardize(&taus);
            let r = select_representatives(&pts, d.mass(), k, &KMeansConfig::default(), seed).unwrap();
            prop_assert_eq!(r.assignments.len(), m);
            prop_assert!((r.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut mem = r.members.clone();
            mem.sort_unstable();
            mem.dedup();
            prop_assert_eq!(mem.len(), k);
        }
    }
}
