//! Deterministic, seedable classic-control environments.
//!
//! The dynamics follow the Gym reference definitions of `CartPole-v1`,
//! `Acrobot-v1` and `MountainCar-v0`, including their time limits. One
//! departure: Acrobot pays −1 on every step, including the step that reaches
//! the goal height, so every episode return is at most −1.

mod acrobot;
mod cartpole;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

pub use acrobot::AcrobotParams;
pub use cartpole::CartPoleParams;
pub use mountain_car::MountainCarParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvName {
    CartPoleV1,
    AcrobotV1,
    MountainCarV0,
}

impl EnvName {
    pub const ALL: [EnvName; 3] = [EnvName::CartPoleV1, EnvName::AcrobotV1, EnvName::MountainCarV0];

    /// The Gym id, e.g. `CartPole-v1`.
    pub fn gym_id(self) -> &'static str {
        match self {
            EnvName::CartPoleV1 => "CartPole-v1",
            EnvName::AcrobotV1 => "Acrobot-v1",
            EnvName::MountainCarV0 => "MountainCar-v0",
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            EnvName::CartPoleV1 => EnvSpec {
                name: self,
                obs_dim: 4,
                n_actions: 2,
                max_episode_steps: 500,
                reward_range: (1.0, 500.0),
            },
            EnvName::AcrobotV1 => EnvSpec {
                name: self,
                obs_dim: 6,
                n_actions: 3,
                max_episode_steps: 500,
                reward_range: (-500.0, -1.0),
            },
            EnvName::MountainCarV0 => EnvSpec {
                name: self,
                obs_dim: 2,
                n_actions: 3,
                max_episode_steps: 200,
                reward_range: (-200.0, -1.0),
            },
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.gym_id())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    /// Accepts the Gym id (`CartPole-v1`) or the variant name (`CartPoleV1`).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CartPole-v1" | "CartPoleV1" => Ok(EnvName::CartPoleV1),
            "Acrobot-v1" | "AcrobotV1" => Ok(EnvName::AcrobotV1),
            "MountainCar-v0" | "MountainCarV0" => Ok(EnvName::MountainCarV0),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

impl Serialize for EnvName {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.gym_id())
    }
}

impl<'de> Deserialize<'de> for EnvName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvSpec {
    pub name: EnvName,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub max_episode_steps: usize,
    /// Bounds on the undiscounted episode return.
    pub reward_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Goal or failure condition met.
    pub terminated: bool,
    /// Step limit reached without termination.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A running environment. Single-owner; create one per worker.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    spec: EnvSpec,
    state: [f64; 4],
    elapsed_steps: usize,
    needs_reset: bool,
    rng: Rng,
}

pub fn make_env(name: EnvName, seed: u64) -> EnvInstance {
    EnvInstance {
        spec: name.spec(),
        state: [0.0; 4],
        elapsed_steps: 0,
        needs_reset: true,
        rng: rng_from_seed(seed),
    }
}

impl EnvInstance {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn elapsed_steps(&self) -> usize {
        self.elapsed_steps
    }

    /// Raw physical state: `[x, x_dot, theta, theta_dot]` for CartPole,
    /// `[theta1, theta2, dtheta1, dtheta2]` for Acrobot and
    /// `[position, velocity]` for MountainCar.
    pub fn state(&self) -> &[f64] {
        &self.state[..self.state_len()]
    }

    fn state_len(&self) -> usize {
        match self.spec.name {
            EnvName::MountainCarV0 => 2,
            _ => 4,
        }
    }

    /// Samples a fresh initial state and returns its observation.
    pub fn reset(&mut self) -> Vec<f64> {
        self.state = match self.spec.name {
            EnvName::CartPoleV1 => cartpole::initial_state(&mut self.rng),
            EnvName::AcrobotV1 => acrobot::initial_state(&mut self.rng),
            EnvName::MountainCarV0 => mountain_car::initial_state(&mut self.rng),
        };
        self.elapsed_steps = 0;
        self.needs_reset = false;
        self.observe()
    }

    pub fn observe(&self) -> Vec<f64> {
        match self.spec.name {
            EnvName::CartPoleV1 => self.state.to_vec(),
            EnvName::AcrobotV1 => acrobot::observe(&self.state).to_vec(),
            EnvName::MountainCarV0 => self.state[..2].to_vec(),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= self.spec.n_actions {
            return Err(Error::InvalidAction {
                action,
                n_actions: self.spec.n_actions,
            });
        }
        if self.needs_reset {
            return Err(Error::EpisodeEnded);
        }
        let (reward, terminated) = match self.spec.name {
            EnvName::CartPoleV1 => cartpole::step(&mut self.state, action, &CartPoleParams::GYM),
            EnvName::AcrobotV1 => acrobot::step(&mut self.state, action, &AcrobotParams::GYM),
            EnvName::MountainCarV0 => {
                mountain_car::step(&mut self.state, action, &MountainCarParams::GYM)
            }
        };
        self.elapsed_steps += 1;
        let truncated = !terminated && self.elapsed_steps >= self.spec.max_episode_steps;
        if terminated || truncated {
            self.needs_reset = true;
        }
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
        })
    }
}
