//! Context-parameterized classic control environments.
//!
//! Each task has a registered [`ContextSpace`]; a context vector `tau` sets
//! the dynamics constants of an [`EnvInstance`]. Instances are immutable and
//! every episode carries its own [`EnvState`], so rollouts on one instance
//! can run concurrently.

pub mod cartpole;
pub mod mountain_car;
pub mod pendulum;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::family::{ContextFeature, ContextSpace, PointMdp};
use crate::{Error, MetricDirection, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Cartpole,
    Pendulum,
    MountainCarContinuous,
}

pub const TASKS: [Task; 3] = [Task::Cartpole, Task::Pendulum, Task::MountainCarContinuous];

impl Task {
    pub fn from_id(id: &str) -> Result<Self> {
        TASKS
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::UnknownTask(id.to_string()))
    }

    pub fn id(self) -> &'static str {
        match self {
            Task::Cartpole => "cartpole",
            Task::Pendulum => "pendulum",
            Task::MountainCarContinuous => "mountain_car_continuous",
        }
    }

    fn grid(self) -> &'static [(&'static str, &'static [f64])] {
        match self {
            Task::Cartpole => &[
                ("pole_length", &[0.05, 0.5, 3.0, 5.0]),
                ("cart_mass", &[0.1, 1.0, 6.0, 10.0]),
                ("pole_mass", &[0.01, 0.1, 0.5, 1.0]),
                ("force_mag", &[1.0, 50.0, 100.0]),
                ("gravity", &[0.1, 9.8, 19.6]),
            ],
            Task::Pendulum => &[
                ("mass", &[0.4, 1.0, 1.5, 2.0, 3.0, 4.0]),
                ("length", &[0.5, 1.0, 2.0, 4.0, 7.0, 10.0]),
                ("gravity", &[2.0, 5.0, 10.0, 12.0, 15.0]),
            ],
            // no published grid for this task; harness default
            Task::MountainCarContinuous => &[
                ("max_speed", &[0.05, 0.07, 0.09]),
                ("goal_position", &[0.45, 0.5, 0.55]),
                ("power", &[0.0010, 0.0015, 0.0020]),
            ],
        }
    }

    /// The task's default context grid.
    pub fn context_space(self) -> ContextSpace {
        let features = self
            .grid()
            .iter()
            .map(|(name, values)| ContextFeature::new(*name, values.to_vec()).expect("built-in grids are valid"))
            .collect();
        ContextSpace::new(self.id(), features).expect("built-in feature names are distinct")
    }

    pub fn feature_names(self) -> Vec<&'static str> {
        self.grid().iter().map(|(n, _)| *n).collect()
    }

    pub fn arity(self) -> usize {
        self.grid().len()
    }

    /// The benchmark's usual single point MDP.
    pub fn nominal_tau(self) -> Vec<f64> {
        match self {
            Task::Cartpole => vec![0.5, 1.0, 0.1, 10.0, 9.8],
            Task::Pendulum => vec![1.0, 1.0, 10.0],
            Task::MountainCarContinuous => vec![0.07, 0.45, 0.0015],
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Task::Cartpole => 500,
            Task::Pendulum => 200,
            Task::MountainCarContinuous => 999,
        }
    }

    pub fn direction(self) -> MetricDirection {
        match self {
            Task::Pendulum => MetricDirection::LowerBetter,
            Task::Cartpole | Task::MountainCarContinuous => MetricDirection::HigherBetter,
        }
    }

    pub fn action_space(self) -> ActionSpace {
        match self {
            Task::Cartpole => ActionSpace::Discrete(2),
            Task::Pendulum => ActionSpace::Box { lo: -2.0, hi: 2.0 },
            Task::MountainCarContinuous => ActionSpace::Box { lo: -1.0, hi: 1.0 },
        }
    }

    pub fn observation_dim(self) -> usize {
        match self {
            Task::Cartpole => 4,
            Task::Pendulum => 3,
            Task::MountainCarContinuous => 2,
        }
    }

    /// Nominal integration step.
    pub fn dt(self) -> f64 {
        match self {
            Task::Cartpole => cartpole::DT,
            Task::Pendulum => pendulum::DT,
            Task::MountainCarContinuous => 1.0,
        }
    }

    /// Largest achievable raw return, when the task has an analytic ceiling.
    pub fn return_ceiling(self) -> Option<f64> {
        match self {
            Task::Cartpole => Some(self.horizon() as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Box { lo: f64, hi: f64 },
}

impl ActionSpace {
    pub fn contains(&self, action: Action) -> bool {
        match (*self, action) {
            (ActionSpace::Discrete(k), Action::Discrete(a)) => a < k,
            (ActionSpace::Box { lo, hi }, Action::Continuous(u)) => u.is_finite() && lo <= u && u <= hi,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

/// Maps observations to actions.
pub trait Controller {
    fn act(&self, observation: &[f64]) -> Action;
}

impl<F: Fn(&[f64]) -> Action> Controller for F {
    fn act(&self, observation: &[f64]) -> Action {
        self(observation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Dynamics {
    Cartpole(cartpole::Params),
    Pendulum(pendulum::Params),
    MountainCar(mountain_car::Params),
}

/// One point MDP realized as a simulator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvInstance {
    task: Task,
    tau: Vec<f64>,
    horizon: usize,
    dt: f64,
    dynamics: Dynamics,
}

/// Builds the simulator for `tau` on a registered task.
///
/// Off-grid context values are accepted (the nominal cartpole force of 10 is
/// not on the grid); only arity and finiteness are checked.
pub fn make_env(task_id: &str, tau: &[f64]) -> Result<EnvInstance> {
    EnvInstance::new(Task::from_id(task_id)?, tau)
}

pub fn make_env_for_point(task_id: &str, point: &PointMdp) -> Result<EnvInstance> {
    make_env(task_id, &point.tau)
}

impl EnvInstance {
    pub fn new(task: Task, tau: &[f64]) -> Result<Self> {
        if tau.len() != task.arity() {
            return Err(Error::ArityMismatch {
                task: task.id().into(),
                expected: task.arity(),
                got: tau.len(),
            });
        }
        if tau.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpace(format!("non-finite context for {}", task.id())));
        }
        let dynamics = match task {
            Task::Cartpole => Dynamics::Cartpole(cartpole::Params::from_tau(tau)),
            Task::Pendulum => Dynamics::Pendulum(pendulum::Params::from_tau(tau)),
            Task::MountainCarContinuous => Dynamics::MountainCar(mountain_car::Params::from_tau(tau)),
        };
        Ok(Self {
            task,
            tau: tau.to_vec(),
            horizon: task.horizon(),
            dt: task.dt(),
            dynamics,
        })
    }

    pub fn nominal(task: Task) -> Self {
        Self::new(task, &task.nominal_tau()).expect("nominal tau is valid")
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        assert!(horizon >= 1, "horizon must be at least one step");
        self.horizon = horizon;
        self
    }

    /// Overrides the integration step (used by the dynamics consistency checks).
    pub fn with_dt(mut self, dt: f64) -> Self {
        assert!(dt > 0.0 && dt.is_finite());
        self.dt = dt;
        self
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn task_id(&self) -> &'static str {
        self.task.id()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn direction(&self) -> MetricDirection {
        self.task.direction()
    }

    pub fn action_space(&self) -> ActionSpace {
        self.task.action_space()
    }

    pub fn observation_dim(&self) -> usize {
        self.task.observation_dim()
    }

    /// Initial state for `seed`.
    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let physical = match self.dynamics {
            Dynamics::Cartpole(_) => cartpole::initial_state(&mut rng).to_vec(),
            Dynamics::Pendulum(_) => pendulum::initial_state(&mut rng).to_vec(),
            Dynamics::MountainCar(_) => mountain_car::initial_state(&mut rng).to_vec(),
        };
        self.state_from_physical(physical)
    }

    /// Wraps an arbitrary physical state (step count zero).
    pub fn state_from_physical(&self, physical: Vec<f64>) -> EnvState {
        let observation = self.observe(&physical);
        EnvState {
            physical,
            observation,
            step_count: 0,
            terminated: false,
            truncated: false,
        }
    }

    fn observe(&self, physical: &[f64]) -> Vec<f64> {
        match self.dynamics {
            Dynamics::Pendulum(_) => pendulum::observe(physical).to_vec(),
            _ => physical.to_vec(),
        }
    }

    /// Advances one step. Stepping a finished episode is an error.
    pub fn step(&self, state: &EnvState, action: Action) -> Result<(EnvState, f64)> {
        if state.is_done() {
            return Err(Error::EpisodeFinished {
                step_count: state.step_count,
            });
        }
        if !self.action_space().contains(action) {
            return Err(Error::InvalidAction(format!(
                "{action:?} outside {:?}",
                self.action_space()
            )));
        }
        let p = &state.physical;
        let (physical, reward, terminated) = match (self.dynamics, action) {
            (Dynamics::Cartpole(params), Action::Discrete(a)) => {
                let force = if a == 1 { params.force_mag } else { -params.force_mag };
                let next = cartpole::euler_step(&params, [p[0], p[1], p[2], p[3]], force, self.dt);
                (next.to_vec(), 1.0, cartpole::out_of_bounds(&next))
            }
            (Dynamics::Pendulum(params), Action::Continuous(u)) => {
                let cost = pendulum::cost([p[0], p[1]], u);
                let next = pendulum::semi_implicit_step(&params, [p[0], p[1]], u, self.dt);
                (next.to_vec(), cost, false)
            }
            (Dynamics::MountainCar(params), Action::Continuous(a)) => {
                let next = mountain_car::step(&params, [p[0], p[1]], a, self.dt);
                let done = mountain_car::at_goal(&params, &next);
                let reward = if done { 100.0 } else { 0.0 } - 0.1 * a * a;
                (next.to_vec(), reward, done)
            }
            _ => unreachable!("action space checked above"),
        };
        let step_count = state.step_count + 1;
        if physical.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::Diverged(step_count));
        }
        let observation = self.observe(&physical);
        Ok((
            EnvState {
                physical,
                observation,
                step_count,
                terminated,
                truncated: !terminated && step_count >= self.horizon,
            },
            reward,
        ))
    }

    /// Runs one episode from `reset(seed)` to termination or truncation.
    pub fn rollout<C: Controller + ?Sized>(&self, policy: &C, seed: u64) -> Result<EpisodeResult> {
        let mut state = self.reset(seed);
        let mut raw_return = 0.0;
        while !state.is_done() {
            let action = policy.act(&state.observation);
            let (next, r) = self.step(&state, action)?;
            raw_return += r;
            state = next;
        }
        Ok(EpisodeResult {
            raw_return,
            steps_used: state.step_count,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Simulator state: `(x, x_dot, theta, theta_dot)` for cartpole,
    /// `(theta, theta_dot)` for pendulum, `(position, velocity)` for mountain car.
    pub physical: Vec<f64>,
    /// What the controller sees; the pendulum exposes `(cos, sin, theta_dot)`.
    pub observation: Vec<f64>,
    pub step_count: usize,
    pub terminated: bool,
    pub truncated: bool,
}

impl EnvState {
    pub fn is_done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Outcome of one episode. `raw_return` is the plain per-step sum (costs for
/// the pendulum, rewards otherwise); direction lives on the task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub raw_return: f64,
    pub steps_used: usize,
    pub seed: u64,
}
