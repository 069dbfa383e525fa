use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::envs::EnvInstance;
use crate::{seed, Error, Result};

use super::{check_linear_env, linear_arity, score_policy, Features, LinearPolicy, Policy, TrainBudget, TrainResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchSettings {
    /// Standard deviation of the Gaussian perturbation.
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default)]
    pub features: Features,
}

fn default_step() -> f64 {
    0.5
}

impl Default for RandomSearchSettings {
    fn default() -> Self {
        Self {
            step_size: default_step(),
            features: Features::Linear,
        }
    }
}

impl RandomSearchSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidTrainer("step_size must be positive".into()));
        }
        Ok(())
    }
}

/// Hill-climbing random search over linear policies.
///
/// Starts at the zero policy and repeatedly proposes `best + step * z`,
/// `z ~ N(0, I)`, keeping a proposal only when its mean return over the
/// scoring episodes strictly improves. Every candidate is scored on the same
/// episode seeds.
pub fn train_random_search(
    env: &EnvInstance,
    budget: &TrainBudget,
    settings: &RandomSearchSettings,
) -> Result<TrainResult> {
    settings.validate()?;
    check_linear_env(env)?;
    let space = env.action_space();
    let dim = linear_arity(env, settings.features);
    let per_candidate = budget.eval_episodes_per_candidate.min(budget.max_episodes);
    let mut rng = seed::rng(seed::derive(budget.rng_seed, "random-search"));

    let mut best = vec![0.0; dim];
    let (mut best_raw, mut best_utility) = score_policy(
        env,
        &Policy::Linear(LinearPolicy::with_features(&best, settings.features, space)),
        budget,
        per_candidate,
    );
    let mut used = per_candidate;
    let mut curve = vec![(used, best_raw)];

    while used + per_candidate <= budget.max_episodes {
        let candidate: Vec<f64> = best
            .iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(&mut rng);
                b + settings.step_size * z
            })
            .collect();
        let policy = Policy::Linear(LinearPolicy::with_features(&candidate, settings.features, space));
        let (raw, utility) = score_policy(env, &policy, budget, per_candidate);
        used += per_candidate;
        if utility > best_utility {
            best = candidate;
            best_raw = raw;
            best_utility = utility;
        }
        curve.push((used, best_raw));
    }

    Ok(TrainResult {
        policy: Policy::Linear(LinearPolicy::with_features(&best, settings.features, space)),
        train_curve: curve,
        episodes_used: used,
    })
}
