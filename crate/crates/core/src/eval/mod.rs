//! Per-point evaluation, normalization and exact family-level performance.

mod cache;
mod scores;

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, PointEvaluation, ScoreCache};
pub use scores::{Cell, ScoreMatrix, ScoreRow};

use crate::controllers::{MethodSpec, TrainerSpec};
use crate::envs::{EnvInstance, Task};
use crate::family::{ImportanceDistribution, MdpFamily, PointMdp};
use crate::par::{self, Execution};
use crate::{seed, Error, MetricDirection, Result};

/// Registered methods, looked up by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodRegistry {
    methods: Vec<MethodSpec>,
}

impl MethodRegistry {
    pub fn new(methods: Vec<MethodSpec>) -> Result<Self> {
        let mut r = Self::default();
        for m in methods {
            r.register(m)?;
        }
        Ok(r)
    }

    pub fn register(&mut self, method: MethodSpec) -> Result<()> {
        if self.methods.iter().any(|m| m.id == method.id) {
            return Err(Error::InvalidConfig(vec![format!(
                "method `{}` registered twice",
                method.id
            )]));
        }
        method.trainer.validate()?;
        self.methods.push(method);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&MethodSpec> {
        self.methods
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::UnknownMethod(id.to_string()))
    }

    pub fn methods(&self) -> &[MethodSpec] {
        &self.methods
    }
}

/// Trains `method` on one point MDP and rolls the result out once per eval
/// seed. Training or rollout divergence is recorded as a failure, not an error.
pub fn evaluate_point(
    method: &MethodSpec,
    task_id: &str,
    point: &PointMdp,
    train_seed: u64,
    eval_seeds: &[u64],
) -> Result<PointEvaluation> {
    let env = EnvInstance::new(Task::from_id(task_id)?, &point.tau)?;
    let mut out = PointEvaluation {
        train_seed,
        eval_seeds: eval_seeds.to_vec(),
        per_seed: Vec::new(),
        failure: None,
        policy: None,
        budget_units: 0,
    };
    let fitted = match method.trainer.fit(&env, train_seed) {
        Ok(f) => f,
        Err(Error::Diverged(step)) => {
            out.failure = Some(format!("training diverged at step {step}"));
            out.budget_units = 1;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.budget_units = fitted.budget_units;
    for &s in eval_seeds {
        match env.rollout(&fitted.policy, s) {
            Ok(r) if r.raw_return.is_finite() => out.per_seed.push(r.raw_return),
            Ok(r) => {
                out.failure = Some(format!("non-finite return {} for seed {s}", r.raw_return));
                break;
            }
            Err(Error::Diverged(step)) => {
                out.failure = Some(format!("rollout diverged at step {step} for seed {s}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if out.failure.is_some() {
        out.per_seed.clear();
    }
    out.policy = Some(fitted.policy.compact());
    Ok(out)
}

/// `raw / anchor`. For reward metrics the anchor must be positive; for cost
/// metrics non-zero. `s = 1` is parity with the anchor either way.
pub fn normalize(raw: f64, anchor: f64, direction: MetricDirection) -> Result<f64> {
    let ok = anchor.is_finite()
        && match direction {
            MetricDirection::HigherBetter => anchor > 0.0,
            MetricDirection::LowerBetter => anchor != 0.0,
        };
    if !ok {
        return Err(Error::ZeroBaseline(usize::MAX));
    }
    Ok(raw / anchor)
}

/// Normalizes an `M x methods` raw matrix against per-point anchors. Bad
/// anchors yield a per-point error entry.
pub fn normalize_scores(
    raw: &[Vec<f64>],
    baseline_raw: &[f64],
    direction: MetricDirection,
) -> Result<Vec<Vec<Result<f64>>>> {
    if raw.len() != baseline_raw.len() {
        return Err(Error::SizeMismatch(format!(
            "{} score rows for {} anchors",
            raw.len(),
            baseline_raw.len()
        )));
    }
    Ok(raw
        .iter()
        .zip(baseline_raw)
        .enumerate()
        .map(|(i, (row, &b))| {
            row.iter()
                .map(|&r| normalize(r, b, direction).map_err(|_| Error::ZeroBaseline(i)))
                .collect()
        })
        .collect())
}

/// How raw returns are turned into normalized scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Ratio to the fixed baseline controller's mean raw return on the same point.
    Baseline,
    /// Ratio to a constant, e.g. the analytic return ceiling.
    Constant(f64),
}

impl Anchor {
    /// Cartpole uses its 500-step ceiling so that 1.0 means solved; other
    /// tasks use the baseline controller.
    pub fn default_for(task: Task) -> Self {
        match task.return_ceiling() {
            Some(c) => Anchor::Constant(c),
            None => Anchor::Baseline,
        }
    }
}

/// Family-level performance `E = sum_i s_i p_i` with per-point contributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallPerformance {
    pub method: String,
    pub value: f64,
    pub contributions: Vec<f64>,
}

/// Contributions `c_i = s_i p_i` and their index-order sum.
pub fn weighted_sum(scores: &[f64], mass: &[f64]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != mass.len() {
        return Err(Error::SizeMismatch(format!(
            "{} scores for {} masses",
            scores.len(),
            mass.len()
        )));
    }
    let contributions: Vec<f64> = scores.iter().zip(mass).map(|(s, p)| s * p).collect();
    Ok((contributions.iter().sum(), contributions))
}

pub fn overall_performance(
    scores: &ScoreMatrix,
    dist: &ImportanceDistribution,
    method: &str,
) -> Result<OverallPerformance> {
    if scores.family_size() != dist.family_size() {
        return Err(Error::SizeMismatch(format!(
            "score matrix covers {} points, distribution {}",
            scores.family_size(),
            dist.family_size()
        )));
    }
    let s = scores.row(method)?.scores()?;
    let (value, contributions) = weighted_sum(&s, dist.mass())?;
    Ok(OverallPerformance {
        method: method.to_string(),
        value,
        contributions,
    })
}

/// Spread of one method's scores across the family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub method: String,
    pub evaluated: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub min_index: usize,
    pub max: f64,
    pub max_index: usize,
}

impl PointSummary {
    pub fn of(row: &ScoreRow) -> Self {
        let usable: Vec<(usize, f64)> = (0..row.cells.len())
            .filter_map(|i| row.score_at(i).map(|s| (i, s)))
            .collect();
        let failed = row
            .cells
            .iter()
            .filter(|c| c.as_ref().is_some_and(|c| !c.is_usable()))
            .count();
        let n = usable.len() as f64;
        let mean = usable.iter().map(|x| x.1).sum::<f64>() / n;
        let var = if usable.len() > 1 {
            usable.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let min = usable
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::NAN));
        let max = usable
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap_or((0, f64::NAN));
        Self {
            method: row.method.clone(),
            evaluated: usable.len(),
            failed,
            mean,
            std: var.sqrt(),
            min: min.1,
            min_index: min.0,
            max: max.1,
            max_index: max.0,
        }
    }
}

/// Result of evaluating one method over a whole family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyEvaluation {
    pub row: ScoreRow,
    /// `None` when some point failed; Definition-style sums need every point.
    pub overall: Option<OverallPerformance>,
    pub summary: PointSummary,
    pub failures: Vec<usize>,
}

/// Orchestrates cached evaluations over one family.
pub struct Engine<'a> {
    task: Task,
    family: &'a MdpFamily,
    cache: &'a ScoreCache,
    eval_seeds: Vec<u64>,
    root_seed: u64,
    anchor: Anchor,
    exec: Execution,
}

impl<'a> Engine<'a> {
    pub fn new(task: Task, family: &'a MdpFamily, cache: &'a ScoreCache) -> Self {
        Self {
            task,
            family,
            cache,
            eval_seeds: vec![0, 1, 2],
            root_seed: 0,
            anchor: Anchor::default_for(task),
            exec: Execution::default(),
        }
    }

    pub fn eval_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.eval_seeds = seeds;
        self
    }

    pub fn root_seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self
    }

    pub fn anchor(mut self, anchor: Anchor) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn family(&self) -> &MdpFamily {
        self.family
    }

    pub fn cache(&self) -> &ScoreCache {
        self.cache
    }

    pub fn train_seed(&self, method_id: &str, index: usize) -> u64 {
        seed::derive_indexed(self.root_seed, &format!("train/{method_id}"), index as u64)
    }

    fn key(&self, method: &MethodSpec, point: &PointMdp, train_seed: u64) -> CacheKey {
        let settings = serde_json::to_string(&method.trainer).expect("trainer settings serialize");
        let tau: Vec<String> = point.tau.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        let material = format!("v1|{settings}|{}|{train_seed}|{:?}", tau.join(","), self.eval_seeds);
        CacheKey {
            method: method.id.clone(),
            task: self.task.id().to_string(),
            point_index: point.index,
            fingerprint: format!("{:016x}", seed::hash_label(&material)),
        }
    }

    fn point(&self, index: usize) -> Result<&PointMdp> {
        self.family
            .member(index)
            .ok_or_else(|| Error::SizeMismatch(format!("point {index} outside family of {}", self.family.size())))
    }

    /// Cached [`evaluate_point`]; the flag reports a cache hit.
    pub fn evaluate_point(&self, method: &MethodSpec, index: usize) -> Result<(PointEvaluation, bool)> {
        let point = self.point(index)?;
        let train_seed = self.train_seed(&method.id, index);
        let key = self.key(method, point, train_seed);
        self.cache.get_or_compute(key, || {
            evaluate_point(method, self.task.id(), point, train_seed, &self.eval_seeds)
        })
    }

    /// The normalization anchor at one point (evaluates the baseline if needed).
    pub fn anchor_at(&self, index: usize) -> Result<f64> {
        match self.anchor {
            Anchor::Constant(c) => Ok(c),
            Anchor::Baseline => {
                let (e, _) = self.evaluate_point(&MethodSpec::baseline("baseline"), index)?;
                Ok(e.raw_mean())
            }
        }
    }

    pub fn cell(&self, method: &MethodSpec, index: usize) -> Result<Cell> {
        let (e, _) = self.evaluate_point(method, index)?;
        let anchor = self.anchor_at(index)?;
        let direction = self.task.direction();
        if e.failed() {
            let n = e.eval_seeds.len();
            return Ok(Cell {
                seeds: e.eval_seeds,
                raw: vec![f64::NAN; n],
                normalized: vec![f64::NAN; n],
                failed: true,
            });
        }
        let normalized: Vec<f64> = e
            .per_seed
            .iter()
            .map(|&r| normalize(r, anchor, direction))
            .collect::<Result<_>>()
            .unwrap_or_else(|_| {
                log::warn!("invalid normalization anchor {anchor} at point {index}");
                vec![f64::NAN; e.per_seed.len()]
            });
        let failed = normalized.iter().any(|v| !v.is_finite());
        Ok(Cell {
            seeds: e.eval_seeds,
            raw: e.per_seed,
            normalized,
            failed,
        })
    }

    /// The cell of a point only if its evaluation is already cached.
    pub fn cached_cell(&self, method: &MethodSpec, index: usize) -> Result<Option<Cell>> {
        let point = self.point(index)?;
        let key = self.key(method, point, self.train_seed(&method.id, index));
        if self.cache.get(&key).is_none() {
            return Ok(None);
        }
        self.cell(method, index).map(Some)
    }

    /// The normalized score `s_i` of `method` at one point; failures are errors.
    pub fn score(&self, method: &MethodSpec, index: usize) -> Result<f64> {
        let c = self.cell(method, index)?;
        if !c.is_usable() {
            return Err(Error::IncompleteScores {
                method: method.id.clone(),
                missing: vec![index],
            });
        }
        Ok(c.score())
    }

    /// Evaluates every family member (in parallel when enabled).
    pub fn evaluate_row(&self, method: &MethodSpec) -> Result<ScoreRow> {
        let cells = par::map_range(self.exec, self.family.size(), |i| self.cell(method, i));
        Ok(ScoreRow {
            method: method.id.clone(),
            cells: cells.into_iter().map(|c| c.map(Some)).collect::<Result<_>>()?,
        })
    }

    pub fn evaluate_family(&self, method: &MethodSpec, dist: &ImportanceDistribution) -> Result<FamilyEvaluation> {
        if dist.family_size() != self.family.size() {
            return Err(Error::SizeMismatch(format!(
                "family has {} members, distribution {}",
                self.family.size(),
                dist.family_size()
            )));
        }
        let row = self.evaluate_row(method)?;
        let failures = row.unusable();
        let overall = if failures.is_empty() {
            let (value, contributions) = weighted_sum(&row.scores()?, dist.mass())?;
            Some(OverallPerformance {
                method: method.id.clone(),
                value,
                contributions,
            })
        } else {
            log::warn!(
                "{} of {} points failed for `{}`",
                failures.len(),
                row.cells.len(),
                method.id
            );
            None
        };
        let summary = PointSummary::of(&row);
        Ok(FamilyEvaluation {
            row,
            overall,
            summary,
            failures,
        })
    }

    /// An empty matrix shaped for this family.
    pub fn empty_matrix(&self) -> ScoreMatrix {
        ScoreMatrix::new(
            self.task.id(),
            self.task.direction(),
            self.family.feature_names().to_vec(),
            self.family.members().iter().map(|m| m.tau.clone()).collect(),
        )
    }

    /// Scores provider that evaluates points on demand.
    pub fn lazy<'e>(&'e self, method: &'e MethodSpec) -> LazyScores<'e, 'a> {
        LazyScores { engine: self, method }
    }
}

/// Evaluates points only when an estimator asks for them.
pub struct LazyScores<'e, 'a> {
    engine: &'e Engine<'a>,
    method: &'e MethodSpec,
}

impl crate::approx::ScoresProvider for LazyScores<'_, '_> {
    fn family_size(&self) -> usize {
        self.engine.family.size()
    }

    fn score(&self, index: usize) -> Result<f64> {
        self.engine.score(self.method, index)
    }
}

/// `true` when the method needs no training (so the cache key ignores seeds).
pub fn is_parameter_free(method: &MethodSpec) -> bool {
    matches!(method.trainer, TrainerSpec::Baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{build_uniform, enumerate_family, ContextFeature, ContextSpace};

    #[test]
    fn overall_performance_example() {
        let (e, c) = weighted_sum(&[1.0, 2.0, 3.0], &[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(e, 1.75);
        assert_eq!(c, vec![0.5, 0.5, 0.75]);
        let (e, _) = weighted_sum(&[1.0; 4], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize(17.0, 10.0, MetricDirection::LowerBetter).unwrap(), 1.7);
        assert_eq!(normalize(3.5, 3.5, MetricDirection::HigherBetter).unwrap(), 1.0);
        assert_eq!(normalize(500.0, 500.0, MetricDirection::HigherBetter).unwrap(), 1.0);
        assert!(normalize(1.0, 0.0, MetricDirection::LowerBetter).is_err());
        assert!(normalize(1.0, -2.0, MetricDirection::HigherBetter).is_err());
        let m = normalize_scores(&[vec![2.0], vec![1.0]], &[4.0, 0.0], MetricDirection::LowerBetter).unwrap();
        assert_eq!(*m[0][0].as_ref().unwrap(), 0.5);
        assert!(matches!(m[1][0], Err(Error::ZeroBaseline(1))));
    }

    #[test]
    fn unknown_method() {
        let r = MethodRegistry::new(vec![MethodSpec::baseline("baseline")]).unwrap();
        assert!(matches!(r.get("ppo"), Err(Error::UnknownMethod(_))));
        assert!(MethodRegistry::new(vec![MethodSpec::baseline("a"), MethodSpec::baseline("a")]).is_err());
    }

    fn small_pendulum() -> MdpFamily {
        enumerate_family(
            &ContextSpace::new(
                "pendulum",
                vec![
                    ContextFeature::new("mass", vec![1.0, 2.0]).unwrap(),
                    ContextFeature::new("length", vec![1.0]).unwrap(),
                    ContextFeature::new("gravity", vec![5.0, 10.0]).unwrap(),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn baseline_evaluation_matches_single_rollouts() {
        let f = small_pendulum();
        let p = &f.members()[0];
        let e = evaluate_point(&MethodSpec::baseline("baseline"), "pendulum", p, 0, &[4, 4, 9]).unwrap();
        assert_eq!(e.per_seed[0], e.per_seed[1]);
        let env = EnvInstance::new(Task::Pendulum, &p.tau).unwrap();
        let direct = env
            .rollout(&crate::controllers::fixed_baseline("pendulum").unwrap(), 9)
            .unwrap();
        assert_eq!(e.per_seed[2], direct.raw_return);
        assert_eq!(e.budget_units, 0);
    }

    #[test]
    fn self_normalized_baseline_is_one() {
        let f = small_pendulum();
        let cache = ScoreCache::new();
        let engine = Engine::new(Task::Pendulum, &f, &cache);
        let out = engine
            .evaluate_family(&MethodSpec::baseline("baseline"), &build_uniform(&f))
            .unwrap();
        let e = out.overall.unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
        assert_eq!(cache.trainings(), 0);
    }

    #[test]
    fn cache_hit_on_repeat() {
        let f = small_pendulum();
        let cache = ScoreCache::new();
        let engine = Engine::new(Task::Pendulum, &f, &cache);
        let m = MethodSpec::baseline("baseline");
        let (a, hit_a) = engine.evaluate_point(&m, 1).unwrap();
        let (b, hit_b) = engine.evaluate_point(&m, 1).unwrap();
        assert!(!hit_a && hit_b);
        assert_eq!(a, b);
    }
}
