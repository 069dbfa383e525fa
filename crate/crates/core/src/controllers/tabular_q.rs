use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, ActionSpace, EnvInstance, Task};
use crate::{seed, Error, Result};

use super::{Discretizer, Policy, TabularPolicy, TrainBudget, TrainResult};

/// Linear decay from `start` to `end` over `decay_episodes`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            end: epsilon,
            decay_episodes: 0,
        }
    }

    pub fn at(&self, episode: usize) -> f64 {
        if episode >= self.decay_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSettings {
    pub bins: Vec<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Observation clipping box; defaults to the task's usual range.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl TabularSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidTrainer("alpha must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidTrainer("gamma must lie in [0, 1]".into()));
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return Err(Error::InvalidTrainer("epsilon must lie in [0, 1]".into()));
        }
        if self.bins.contains(&0) {
            return Err(Error::InvalidTrainer("every dimension needs at least one bin".into()));
        }
        Ok(())
    }

    fn discretizer(&self, env: &EnvInstance) -> Result<Discretizer> {
        let bounds = match (&self.bounds, env.task()) {
            (Some(b), _) => b.clone(),
            (None, Task::Cartpole) => vec![(-2.4, 2.4), (-3.0, 3.0), (-0.21, 0.21), (-3.5, 3.5)],
            (None, other) => {
                return Err(Error::InvalidTrainer(format!(
                    "no default observation bounds for {}",
                    other.id()
                )))
            }
        };
        if self.bins.len() != env.observation_dim() {
            return Err(Error::InvalidTrainer(format!(
                "{} bin counts for a {}-dimensional observation",
                self.bins.len(),
                env.observation_dim()
            )));
        }
        Discretizer::new(self.bins.clone(), bounds)
    }
}

/// Full outcome of a Q-learning run, including per-cell update counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QLearningOutcome {
    pub policy: TabularPolicy,
    /// Number of updates applied to each `(state, action)` cell.
    pub visits: Vec<u64>,
    pub train_curve: Vec<(usize, f64)>,
}

/// Epsilon-greedy tabular Q-learning on the discretized observation box.
///
/// Terminal transitions do not bootstrap; truncated ones do. Greedy ties go
/// to the lower action index.
pub fn q_learning(env: &EnvInstance, budget: &TrainBudget, settings: &TabularSettings) -> Result<QLearningOutcome> {
    settings.validate()?;
    let n_actions = match env.action_space() {
        ActionSpace::Discrete(k) => k,
        ActionSpace::Box { .. } => {
            return Err(Error::InvalidTrainer(format!(
                "tabular Q-learning needs discrete actions; {} is continuous",
                env.task_id()
            )))
        }
    };
    let discretizer = settings.discretizer(env)?;
    let n_cells = discretizer.n_states() * n_actions;
    let mut policy = TabularPolicy {
        discretizer,
        n_actions,
        q: vec![0.0; n_cells],
    };
    let mut visits = vec![0u64; n_cells];
    let mut rng = seed::rng(seed::derive(budget.rng_seed, "q-learning"));

    let window = (budget.max_episodes / 50).max(1);
    let mut curve = Vec::new();
    let mut window_sum = 0.0;
    let mut window_len = 0;

    for episode in 0..budget.max_episodes {
        let eps = settings.epsilon.at(episode);
        let mut state = env.reset(seed::derive_indexed(budget.rng_seed, "q-episode", episode as u64));
        let mut s = policy.discretizer.state_of(&state.observation);
        let mut ret = 0.0;
        while !state.is_done() {
            let a = if rng.random::<f64>() < eps {
                rng.random_range(0..n_actions)
            } else {
                policy.greedy(s)
            };
            let (next, r) = env.step(&state, Action::Discrete(a))?;
            let s_next = policy.discretizer.state_of(&next.observation);
            let bootstrap = if next.terminated {
                0.0
            } else {
                let row = &policy.q[s_next * n_actions..(s_next + 1) * n_actions];
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let cell = s * n_actions + a;
            let target = r + settings.gamma * bootstrap;
            policy.q[cell] += settings.alpha * (target - policy.q[cell]);
            visits[cell] += 1;
            ret += r;
            state = next;
            s = s_next;
        }
        window_sum += ret;
        window_len += 1;
        if window_len == window || episode + 1 == budget.max_episodes {
            curve.push((episode + 1, window_sum / window_len as f64));
            window_sum = 0.0;
            window_len = 0;
        }
    }

    Ok(QLearningOutcome {
        policy,
        visits,
        train_curve: curve,
    })
}

pub fn train_tabular_q(env: &EnvInstance, budget: &TrainBudget, settings: &TabularSettings) -> Result<TrainResult> {
    let out = q_learning(env, budget, settings)?;
    Ok(TrainResult {
        policy: Policy::Tabular(out.policy),
        train_curve: out.train_curve,
        episodes_used: budget.max_episodes,
    })
}
