use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::envs::EnvInstance;
use crate::{seed, Error, Result};

use super::{check_linear_env, linear_arity, score_policy, Features, LinearPolicy, Policy, TrainBudget, TrainResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemSettings {
    pub population: usize,
    pub elite_frac: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Floor added to the elite standard deviation each iteration.
    #[serde(default = "default_min_std")]
    pub min_std: f64,
    #[serde(default)]
    pub features: Features,
}

fn default_init_std() -> f64 {
    1.0
}

fn default_min_std() -> f64 {
    0.01
}

impl CemSettings {
    pub fn new(population: usize, elite_frac: f64) -> Self {
        Self {
            population,
            elite_frac,
            init_std: default_init_std(),
            min_std: default_min_std(),
            features: Features::Linear,
        }
    }

    pub fn elite_count(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.population as f64 * self.elite_frac).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidTrainer("population must be at least 2".into()));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac <= 1.0) {
            return Err(Error::InvalidTrainer("elite_frac must lie in (0, 1]".into()));
        }
        if self.population as f64 * self.elite_frac < 1.0 {
            return Err(Error::InvalidTrainer(
                "population * elite_frac selects no elites".into(),
            ));
        }
        if !(self.init_std > 0.0) || !(self.min_std >= 0.0) {
            return Err(Error::InvalidTrainer(
                "init_std must be positive and min_std non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Refits the sampling distribution to the `elite_count` best candidates.
///
/// Candidates are ranked by descending utility (ties keep sampling order).
/// Returns the elite mean and per-coordinate elite standard deviation.
pub fn cem_update(candidates: &[Vec<f64>], utilities: &[f64], elite_count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]));
    let elites = &order[..elite_count];
    let dim = candidates[0].len();
    let n = elite_count as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|d| elites.iter().map(|&e| candidates[e][d]).sum::<f64>() / n)
        .collect();
    let std = (0..dim)
        .map(|d| {
            let var = elites
                .iter()
                .map(|&e| (candidates[e][d] - mean[d]).powi(2))
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect();
    (mean, std)
}

/// Cross-entropy method over linear policy parameters.
///
/// Each iteration samples `population` candidates from a diagonal Gaussian,
/// scores each on the shared scoring episodes and refits mean/std to the
/// elites. The curve tracks the best elite mean so far; the returned policy
/// is the best single candidate seen.
pub fn train_cem(env: &EnvInstance, budget: &TrainBudget, settings: &CemSettings) -> Result<TrainResult> {
    let elite_count = settings.elite_count()?;
    check_linear_env(env)?;
    let per_iteration = settings.population * budget.eval_episodes_per_candidate;
    if per_iteration > budget.max_episodes {
        return Err(Error::InvalidTrainer(format!(
            "one CEM iteration needs {per_iteration} episodes, budget allows {}",
            budget.max_episodes
        )));
    }
    let space = env.action_space();
    let dim = linear_arity(env, settings.features);
    let mut rng = seed::rng(seed::derive(budget.rng_seed, "cem"));
    let mut mean = vec![0.0; dim];
    let mut std = vec![settings.init_std; dim];

    let mut best_params = mean.clone();
    let mut best_utility = f64::NEG_INFINITY;
    let mut best_elite: Option<(f64, f64)> = None;
    let mut curve = Vec::new();
    let mut used = 0;

    while used + per_iteration <= budget.max_episodes {
        let candidates: Vec<Vec<f64>> = (0..settings.population)
            .map(|_| {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + s * z
                    })
                    .collect()
            })
            .collect();
        let scored: Vec<(f64, f64)> = candidates
            .iter()
            .map(|c| {
                let policy = Policy::Linear(LinearPolicy::with_features(c, settings.features, space));
                score_policy(env, &policy, budget, budget.eval_episodes_per_candidate)
            })
            .collect();
        used += per_iteration;

        let utilities: Vec<f64> = scored.iter().map(|s| s.1).collect();
        for (c, &(_, u)) in candidates.iter().zip(&scored) {
            if u > best_utility {
                best_utility = u;
                best_params = c.clone();
            }
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]));
        let elite_raw = order[..elite_count].iter().map(|&i| scored[i].0).sum::<f64>() / elite_count as f64;
        let elite_utility = env.direction().utility(elite_raw);
        if best_elite.is_none_or(|(_, u)| elite_utility > u) {
            best_elite = Some((elite_raw, elite_utility));
        }
        curve.push((used, best_elite.map_or(f64::NAN, |b| b.0)));

        let (m, s) = cem_update(&candidates, &utilities, elite_count);
        mean = m;
        std = s.into_iter().map(|v| v + settings.min_std).collect();
    }

    Ok(TrainResult {
        policy: Policy::Linear(LinearPolicy::with_features(&best_params, settings.features, space)),
        train_curve: curve,
        episodes_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_elite_fraction_is_population_mean() {
        let c = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let (m, _) = cem_update(&c, &[0.3, -1.0, 2.0], 3);
        assert_eq!(m, vec![3.0, 3.0]);
    }

    #[test]
    fn elite_selection() {
        let c = vec![vec![1.0], vec![3.0], vec![5.0], vec![7.0]];
        let (m, s) = cem_update(&c, &[0.0, 9.0, 8.0, -1.0], 2);
        assert_eq!(m, vec![4.0]);
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn settings_validation() {
        assert!(CemSettings::new(1, 0.5).validate().is_err());
        assert!(CemSettings::new(4, 0.0).validate().is_err());
        assert!(CemSettings::new(4, 1.5).validate().is_err());
        assert!(CemSettings::new(4, 0.2).validate().is_err());
        assert_eq!(CemSettings::new(64, 0.125).elite_count().unwrap(), 8);
    }
}
