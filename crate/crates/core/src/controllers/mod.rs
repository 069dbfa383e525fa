//! Lightweight trainable controllers and fixed baselines.
//!
//! One model is trained per point MDP. A completed training counts as one
//! budget unit no matter how many episodes it took; the fixed baselines are
//! parameter-free and cost nothing.

mod baseline;
mod cem;
mod random_search;
mod tabular_q;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::envs::{Action, ActionSpace, Controller, EnvInstance, Task};
use crate::{seed, Error, Result};

pub use baseline::fixed_baseline;
pub use cem::{cem_update, train_cem, CemSettings};
pub use random_search::{train_random_search, RandomSearchSettings};
pub use tabular_q::{q_learning, train_tabular_q, EpsilonSchedule, QLearningOutcome, TabularSettings};

/// Observation features a linear policy acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    /// The raw observation.
    #[default]
    Linear,
    /// The observation followed by all products `o_i * o_j`, `i <= j`.
    Quadratic,
}

impl Features {
    pub fn dim(self, obs_dim: usize) -> usize {
        match self {
            Features::Linear => obs_dim,
            Features::Quadratic => obs_dim + obs_dim * (obs_dim + 1) / 2,
        }
    }

    fn dot(self, weights: &[f64], obs: &[f64]) -> f64 {
        let mut z: f64 = weights.iter().zip(obs).map(|(w, o)| w * o).sum();
        if self == Features::Quadratic {
            let mut k = obs.len();
            for i in 0..obs.len() {
                for j in i..obs.len() {
                    z += weights[k] * obs[i] * obs[j];
                    k += 1;
                }
            }
        }
        z
    }
}

/// Linear map `w . phi(obs) + b`, thresholded at zero for two discrete
/// actions or clipped to the box for continuous actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default)]
    pub features: Features,
    pub action_space: ActionSpace,
}

impl LinearPolicy {
    pub fn from_params(params: &[f64], action_space: ActionSpace) -> Self {
        Self::with_features(params, Features::Linear, action_space)
    }

    pub fn with_features(params: &[f64], features: Features, action_space: ActionSpace) -> Self {
        let (bias, weights) = params.split_last().expect("at least the bias parameter");
        Self {
            weights: weights.to_vec(),
            bias: *bias,
            features,
            action_space,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    fn activation(&self, obs: &[f64]) -> f64 {
        self.features.dot(&self.weights, obs) + self.bias
    }
}

/// Uniform grid over a clipped observation box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: Vec<usize>,
    pub bounds: Vec<(f64, f64)>,
}

impl Discretizer {
    pub fn new(bins: Vec<usize>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bins.len() != bounds.len() {
            return Err(Error::InvalidTrainer(format!(
                "{} bin counts for {} observation dimensions",
                bins.len(),
                bounds.len()
            )));
        }
        if bins.contains(&0) {
            return Err(Error::InvalidTrainer("every dimension needs at least one bin".into()));
        }
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidTrainer("observation bounds must satisfy lo < hi".into()));
        }
        Ok(Self { bins, bounds })
    }

    pub fn n_states(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn state_of(&self, obs: &[f64]) -> usize {
        self.bins
            .iter()
            .zip(&self.bounds)
            .zip(obs)
            .fold(0, |acc, ((&n, &(lo, hi)), &o)| {
                let frac = if o.is_nan() {
                    0.5
                } else {
                    (o.clamp(lo, hi) - lo) / (hi - lo)
                };
                let b = ((frac * n as f64) as usize).min(n - 1);
                acc * n + b
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub discretizer: Discretizer,
    pub n_actions: usize,
    /// Row-major `n_states x n_actions`.
    pub q: Vec<f64>,
}

impl TabularPolicy {
    pub fn greedy(&self, state: usize) -> usize {
        let row = &self.q[state * self.n_actions..(state + 1) * self.n_actions];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Linear(LinearPolicy),
    Tabular(TabularPolicy),
    Fixed { task: Task },
}

impl Controller for Policy {
    fn act(&self, obs: &[f64]) -> Action {
        match self {
            Policy::Linear(p) => {
                let z = p.activation(obs);
                match p.action_space {
                    ActionSpace::Discrete(_) => Action::Discrete(usize::from(z > 0.0)),
                    ActionSpace::Box { lo, hi } => {
                        let u = if z.is_nan() { 0.5 * (lo + hi) } else { z.clamp(lo, hi) };
                        Action::Continuous(u)
                    }
                }
            }
            Policy::Tabular(p) => Action::Discrete(p.greedy(p.discretizer.state_of(obs))),
            Policy::Fixed { task } => baseline::act(*task, obs),
        }
    }
}

impl Policy {
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Linear(_) => "linear",
            Policy::Tabular(_) => "tabular",
            Policy::Fixed { .. } => "fixed",
        }
    }

    /// Like [`Policy::dump`], but tabular Q-values are replaced by a hash of
    /// their bits so the line stays short.
    pub fn compact(&self) -> String {
        match self {
            Policy::Tabular(p) => {
                let bits: Vec<String> = p.q.iter().map(|v| format!("{:x}", v.to_bits())).collect();
                format!(
                    "tabular bins={:?} actions={} q_hash={:016x}",
                    p.discretizer.bins,
                    p.n_actions,
                    seed::hash_label(&bits.join(","))
                )
            }
            _ => self.dump(),
        }
    }

    /// Plain-text parameter dump: kind followed by space-separated values.
    pub fn dump(&self) -> String {
        let mut s = String::from(self.kind());
        match self {
            Policy::Linear(p) => {
                if p.features == Features::Quadratic {
                    s.push_str(" quadratic");
                }
                for v in p.params() {
                    let _ = write!(s, " {v}");
                }
            }
            Policy::Tabular(p) => {
                let _ = write!(s, " bins={:?} actions={}", p.discretizer.bins, p.n_actions);
                for v in &p.q {
                    let _ = write!(s, " {v}");
                }
            }
            Policy::Fixed { task } => {
                let _ = write!(s, " {}", task.id());
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainBudget {
    pub max_episodes: usize,
    pub eval_episodes_per_candidate: usize,
    pub rng_seed: u64,
}

impl TrainBudget {
    pub fn new(max_episodes: usize, eval_episodes_per_candidate: usize, rng_seed: u64) -> Result<Self> {
        if max_episodes == 0 || eval_episodes_per_candidate == 0 {
            return Err(Error::InvalidTrainer(
                "max_episodes and eval_episodes_per_candidate must be positive".into(),
            ));
        }
        Ok(Self {
            max_episodes,
            eval_episodes_per_candidate,
            rng_seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub policy: Policy,
    /// `(episodes consumed, mean raw return)` checkpoints.
    pub train_curve: Vec<(usize, f64)>,
    pub episodes_used: usize,
}

/// Trainer choice and settings for one method; the seed comes from the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trainer", rename_all = "snake_case")]
pub enum TrainerSpec {
    Baseline,
    RandomSearch {
        max_episodes: usize,
        eval_episodes_per_candidate: usize,
        #[serde(flatten)]
        settings: RandomSearchSettings,
    },
    Cem {
        max_episodes: usize,
        eval_episodes_per_candidate: usize,
        #[serde(flatten)]
        settings: CemSettings,
    },
    TabularQ {
        max_episodes: usize,
        eval_episodes_per_candidate: usize,
        #[serde(flatten)]
        settings: TabularSettings,
    },
}

/// A trained (or fixed) controller for one point MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub policy: Policy,
    pub train_curve: Vec<(usize, f64)>,
    /// Models trained: 1 for trainers, 0 for the parameter-free baselines.
    pub budget_units: usize,
}

impl TrainerSpec {
    pub fn budget(&self, rng_seed: u64) -> Result<Option<TrainBudget>> {
        match *self {
            TrainerSpec::Baseline => Ok(None),
            TrainerSpec::RandomSearch {
                max_episodes,
                eval_episodes_per_candidate,
                ..
            }
            | TrainerSpec::Cem {
                max_episodes,
                eval_episodes_per_candidate,
                ..
            }
            | TrainerSpec::TabularQ {
                max_episodes,
                eval_episodes_per_candidate,
                ..
            } => TrainBudget::new(max_episodes, eval_episodes_per_candidate, rng_seed).map(Some),
        }
    }

    /// Checks settings that do not depend on the environment.
    pub fn validate(&self) -> Result<()> {
        self.budget(0)?;
        match self {
            TrainerSpec::Cem { settings, .. } => settings.validate(),
            TrainerSpec::RandomSearch { settings, .. } => settings.validate(),
            TrainerSpec::TabularQ { settings, .. } => settings.validate(),
            TrainerSpec::Baseline => Ok(()),
        }
    }

    pub fn fit(&self, env: &EnvInstance, rng_seed: u64) -> Result<Fitted> {
        let budget = self.budget(rng_seed)?;
        let result = match (self, budget) {
            (TrainerSpec::Baseline, _) => {
                return Ok(Fitted {
                    policy: fixed_baseline(env.task_id())?,
                    train_curve: Vec::new(),
                    budget_units: 0,
                })
            }
            (TrainerSpec::RandomSearch { settings, .. }, Some(b)) => train_random_search(env, &b, settings)?,
            (TrainerSpec::Cem { settings, .. }, Some(b)) => train_cem(env, &b, settings)?,
            (TrainerSpec::TabularQ { settings, .. }, Some(b)) => train_tabular_q(env, &b, settings)?,
            _ => unreachable!("non-baseline trainers always have a budget"),
        };
        Ok(Fitted {
            policy: result.policy,
            train_curve: result.train_curve,
            budget_units: 1,
        })
    }
}

/// A registered method: an opaque label plus how to obtain its controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: String,
    #[serde(flatten)]
    pub trainer: TrainerSpec,
}

impl MethodSpec {
    pub fn baseline(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            trainer: TrainerSpec::Baseline,
        }
    }
}

/// Mean raw return of `policy` over the candidate-scoring episodes, plus its
/// utility (higher is better). Divergent episodes score `-inf`.
pub(crate) fn score_policy<C: Controller>(
    env: &EnvInstance,
    policy: &C,
    budget: &TrainBudget,
    episodes: usize,
) -> (f64, f64) {
    let mut total = 0.0;
    for j in 0..episodes {
        let ep_seed = seed::derive_indexed(budget.rng_seed, "candidate-episode", j as u64);
        match env.rollout(policy, ep_seed) {
            Ok(r) if r.raw_return.is_finite() => total += r.raw_return,
            _ => return (f64::NAN, f64::NEG_INFINITY),
        }
    }
    let raw = total / episodes as f64;
    (raw, env.direction().utility(raw))
}

/// Number of parameters of a linear policy on `env` (weights plus bias).
pub(crate) fn linear_arity(env: &EnvInstance, features: Features) -> usize {
    features.dim(env.observation_dim()) + 1
}

pub(crate) fn check_linear_env(env: &EnvInstance) -> Result<()> {
    match env.action_space() {
        ActionSpace::Discrete(2) | ActionSpace::Box { .. } => Ok(()),
        other => Err(Error::InvalidTrainer(format!(
            "linear policies need two discrete actions or a box, got {other:?}"
        ))),
    }
}
