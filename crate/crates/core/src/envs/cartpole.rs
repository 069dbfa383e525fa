//! Cart-pole balancing with explicit Euler integration.

use rand::Rng;

pub const DT: f64 = 0.02;
/// 12 degrees.
pub const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const X_LIMIT: f64 = 2.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Half the pole length, as in the usual benchmark definition.
    pub pole_length: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub force_mag: f64,
    pub gravity: f64,
}

impl Params {
    pub fn from_tau(tau: &[f64]) -> Self {
        Self {
            pole_length: tau[0],
            cart_mass: tau[1],
            pole_mass: tau[2],
            force_mag: tau[3],
            gravity: tau[4],
        }
    }
}

/// `(x_acc, theta_acc)` for state `(x, x_dot, theta, theta_dot)` under `force`.
pub fn accelerations(p: &Params, s: [f64; 4], force: f64) -> (f64, f64) {
    let [_, _, theta, theta_dot] = s;
    let (sin, cos) = theta.sin_cos();
    let total_mass = p.cart_mass + p.pole_mass;
    let polemass_length = p.pole_mass * p.pole_length;
    let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc =
        (p.gravity * sin - cos * temp) / (p.pole_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
    (x_acc, theta_acc)
}

pub fn euler_step(p: &Params, s: [f64; 4], force: f64, dt: f64) -> [f64; 4] {
    let (x_acc, theta_acc) = accelerations(p, s, force);
    [
        s[0] + dt * s[1],
        s[1] + dt * x_acc,
        s[2] + dt * s[3],
        s[3] + dt * theta_acc,
    ]
}

pub fn out_of_bounds(s: &[f64; 4]) -> bool {
    s[0].abs() > X_LIMIT || s[2].abs() > THETA_LIMIT
}

pub(crate) fn initial_state(rng: &mut impl Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.random_range(-0.05..0.05))
}
