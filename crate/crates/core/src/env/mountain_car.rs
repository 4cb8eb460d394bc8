use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarParams {
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub goal_velocity: f64,
    pub force: f64,
    pub gravity: f64,
}

impl MountainCarParams {
    pub const GYM: MountainCarParams = MountainCarParams {
        min_position: -1.2,
        max_position: 0.6,
        max_speed: 0.07,
        goal_position: 0.5,
        goal_velocity: 0.0,
        force: 0.001,
        gravity: 0.0025,
    };
}

pub(super) fn initial_state(rng: &mut Rng) -> [f64; 4] {
    [rng.random_range(-0.6..-0.4), 0.0, 0.0, 0.0]
}

/// Actions: 0 push left, 1 no push, 2 push right.
pub(super) fn step(s: &mut [f64; 4], action: usize, p: &MountainCarParams) -> (f64, bool) {
    let mut position = s[0];
    let mut velocity = s[1];
    velocity += (action as f64 - 1.0) * p.force - (3.0 * position).cos() * p.gravity;
    velocity = velocity.clamp(-p.max_speed, p.max_speed);
    position += velocity;
    position = position.clamp(p.min_position, p.max_position);
    if position == p.min_position && velocity < 0.0 {
        velocity = 0.0;
    }
    s[0] = position;
    s[1] = velocity;
    let terminated = position >= p.goal_position && velocity >= p.goal_velocity;
    (-1.0, terminated)
}
