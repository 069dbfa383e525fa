//! Continuous mountain car.
//!
//! The usual map is a semi-implicit Euler step of unit size of
//! `x'' = power * a - 0.0025 * cos(3x)`; `dt` scales it for consistency checks.

use rand::Rng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const HILL: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub max_speed: f64,
    pub goal_position: f64,
    pub power: f64,
}

impl Params {
    pub fn from_tau(tau: &[f64]) -> Self {
        Self {
            max_speed: tau[0],
            goal_position: tau[1],
            power: tau[2],
        }
    }
}

pub fn acceleration(p: &Params, position: f64, action: f64) -> f64 {
    p.power * action - HILL * (3.0 * position).cos()
}

pub fn step(p: &Params, s: [f64; 2], action: f64, dt: f64) -> [f64; 2] {
    let mut velocity = (s[1] + dt * acceleration(p, s[0], action)).clamp(-p.max_speed, p.max_speed);
    let position = (s[0] + dt * velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    [position, velocity]
}

pub fn at_goal(p: &Params, s: &[f64; 2]) -> bool {
    s[0] >= p.goal_position && s[1] >= 0.0
}

pub(crate) fn initial_state(rng: &mut impl Rng) -> [f64; 2] {
    [rng.random_range(-0.6..-0.4), 0.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_saturates_at_max_speed() {
        let p = Params::from_tau(&[0.07, 0.45, 0.0015]);
        let s = step(&p, [-0.5, 0.07], 1.0, 1.0);
        assert_eq!(s[1], 0.07);
        assert_eq!(s[0], -0.5 + 0.07);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let p = Params::from_tau(&[0.07, 0.45, 0.0015]);
        let s = step(&p, [-1.19, -0.05], -1.0, 1.0);
        assert_eq!(s, [MIN_POSITION, 0.0]);
    }
}
