use crate::envs::{Action, Task};
use crate::Result;

use super::Policy;

/// The task's hand-written, parameter-free controller.
///
/// - cartpole: push toward the side the pole is falling, `sign(theta + 0.5 * theta_dot)`.
/// - pendulum: within about 37 degrees of upright, saturated PD capture
///   `u = clip(-(8 * theta + 2 * theta_dot), -2, 2)`; elsewhere full torque
///   along the angular velocity, `u = 2 * sign(theta_dot)`, which pumps energy.
/// - mountain car: bang-bang along the velocity, `a = sign(v)` with `sign(0) = +1`.
pub fn fixed_baseline(task_id: &str) -> Result<Policy> {
    Ok(Policy::Fixed {
        task: Task::from_id(task_id)?,
    })
}

pub(crate) fn act(task: Task, obs: &[f64]) -> Action {
    match task {
        Task::Cartpole => Action::Discrete(usize::from(obs[2] + 0.5 * obs[3] > 0.0)),
        Task::Pendulum => {
            let (cos, sin, theta_dot) = (obs[0], obs[1], obs[2]);
            let u = if cos > 0.8 {
                -(8.0 * sin.atan2(cos) + 2.0 * theta_dot)
            } else if theta_dot < 0.0 {
                -2.0
            } else {
                2.0
            };
            Action::Continuous(if u.is_nan() { 0.0 } else { u.clamp(-2.0, 2.0) })
        }
        Task::MountainCarContinuous => Action::Continuous(if obs[1] < 0.0 { -1.0 } else { 1.0 }),
    }
}
