use rand::Rng as _;

use crate::rng::Rng;

/// Physical constants of the cart-pole system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
}

impl CartPoleParams {
    pub const GYM: CartPoleParams = CartPoleParams {
        gravity: 9.8,
        mass_cart: 1.0,
        mass_pole: 0.1,
        half_length: 0.5,
        force_mag: 10.0,
        tau: 0.02,
        theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
        x_threshold: 2.4,
    };
}

pub(super) fn initial_state(rng: &mut Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.random_range(-0.05..0.05))
}

/// Explicit Euler step. Returns `(reward, terminated)`.
pub(super) fn step(s: &mut [f64; 4], action: usize, p: &CartPoleParams) -> (f64, bool) {
    let [x, x_dot, theta, theta_dot] = *s;
    let force = if action == 1 { p.force_mag } else { -p.force_mag };
    let (sin_t, cos_t) = theta.sin_cos();
    let total_mass = p.mass_cart + p.mass_pole;
    let pole_mass_length = p.mass_pole * p.half_length;

    let temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
    let theta_acc = (p.gravity * sin_t - cos_t * temp)
        / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos_t * cos_t / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

    *s = [
        x + p.tau * x_dot,
        x_dot + p.tau * x_acc,
        theta + p.tau * theta_dot,
        theta_dot + p.tau * theta_acc,
    ];
    let terminated = s[0] < -p.x_threshold
        || s[0] > p.x_threshold
        || s[2] < -p.theta_threshold
        || s[2] > p.theta_threshold;
    (1.0, terminated)
}
