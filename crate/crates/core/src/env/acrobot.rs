use std::f64::consts::PI;

use rand::Rng as _;

use crate::rng::Rng;

/// Two-link acrobot constants ("book" dynamics variant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcrobotParams {
    pub dt: f64,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_pos_1: f64,
    pub link_com_pos_2: f64,
    pub link_moi: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub gravity: f64,
    pub torques: [f64; 3],
}

impl AcrobotParams {
    pub const GYM: AcrobotParams = AcrobotParams {
        dt: 0.2,
        link_length_1: 1.0,
        link_mass_1: 1.0,
        link_mass_2: 1.0,
        link_com_pos_1: 0.5,
        link_com_pos_2: 0.5,
        link_moi: 1.0,
        max_vel_1: 4.0 * PI,
        max_vel_2: 9.0 * PI,
        gravity: 9.8,
        torques: [-1.0, 0.0, 1.0],
    };
}

pub(super) fn initial_state(rng: &mut Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.random_range(-0.1..0.1))
}

pub(super) fn observe(s: &[f64; 4]) -> [f64; 6] {
    let (s0, c0) = s[0].sin_cos();
    let (s1, c1) = s[1].sin_cos();
    [c0, s0, c1, s1, s[2], s[3]]
}

fn derivatives(s: &[f64; 4], torque: f64, p: &AcrobotParams) -> [f64; 4] {
    let m1 = p.link_mass_1;
    let m2 = p.link_mass_2;
    let l1 = p.link_length_1;
    let lc1 = p.link_com_pos_1;
    let lc2 = p.link_com_pos_2;
    let i1 = p.link_moi;
    let i2 = p.link_moi;
    let g = p.gravity;
    let [theta1, theta2, dtheta1, dtheta2] = *s;
    let (sin2, cos2) = theta2.sin_cos();

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * sin2
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * sin2 - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn axpy(y: &[f64; 4], a: f64, x: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| y[i] + a * x[i])
}

/// Maps `x` into `[lo, hi]` by adding or subtracting the period.
fn wrap(mut x: f64, lo: f64, hi: f64) -> f64 {
    let period = hi - lo;
    while x > hi {
        x -= period;
    }
    while x < lo {
        x += period;
    }
    x
}

/// One classical RK4 step over `dt`. Returns `(reward, terminated)`.
pub(super) fn step(s: &mut [f64; 4], action: usize, p: &AcrobotParams) -> (f64, bool) {
    let torque = p.torques[action];
    let h = p.dt;
    let k1 = derivatives(s, torque, p);
    let k2 = derivatives(&axpy(s, h / 2.0, &k1), torque, p);
    let k3 = derivatives(&axpy(s, h / 2.0, &k2), torque, p);
    let k4 = derivatives(&axpy(s, h, &k3), torque, p);
    let mut ns: [f64; 4] =
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    ns[0] = wrap(ns[0], -PI, PI);
    ns[1] = wrap(ns[1], -PI, PI);
    ns[2] = ns[2].clamp(-p.max_vel_1, p.max_vel_1);
    ns[3] = ns[3].clamp(-p.max_vel_2, p.max_vel_2);
    *s = ns;
    let terminated = -ns[0].cos() - (ns[1] + ns[0]).cos() > 1.0;
    (-1.0, terminated)
}
