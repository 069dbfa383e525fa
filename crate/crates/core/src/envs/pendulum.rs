//! Torque-limited pendulum swing-up, semi-implicit Euler.
//!
//! `theta = 0` is upright. The per-step cost is charged on the state before
//! the update.

use std::f64::consts::PI;

use rand::Rng;

pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl Params {
    pub fn from_tau(tau: &[f64]) -> Self {
        Self {
            mass: tau[0],
            length: tau[1],
            gravity: tau[2],
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

pub fn angular_acceleration(p: &Params, theta: f64, torque: f64) -> f64 {
    3.0 * p.gravity / (2.0 * p.length) * theta.sin() + 3.0 / (p.mass * p.length * p.length) * torque
}

pub fn semi_implicit_step(p: &Params, s: [f64; 2], torque: f64, dt: f64) -> [f64; 2] {
    let theta_dot = (s[1] + angular_acceleration(p, s[0], torque) * dt).clamp(-MAX_SPEED, MAX_SPEED);
    [s[0] + theta_dot * dt, theta_dot]
}

pub fn cost(s: [f64; 2], torque: f64) -> f64 {
    let th = wrap_angle(s[0]);
    th * th + 0.1 * s[1] * s[1] + 0.001 * torque * torque
}

pub fn observe(s: &[f64]) -> [f64; 3] {
    let (sin, cos) = s[0].sin_cos();
    [cos, sin, s[1]]
}

pub(crate) fn initial_state(rng: &mut impl Rng) -> [f64; 2] {
    [rng.random_range(-PI..PI), rng.random_range(-1.0..1.0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn speed_is_clipped() {
        let p = Params::from_tau(&[0.4, 0.5, 15.0]);
        let s = semi_implicit_step(&p, [1.5, 7.9], 2.0, DT);
        assert_eq!(s[1], MAX_SPEED);
    }
}
