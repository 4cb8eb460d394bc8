//! Meta-reinforcement learning over the weights of frozen Q-network agents.
//!
//! A meta-learner (PPO or A2C with a Gaussian policy) emits weight vectors for
//! a randomly chosen, fixed subset of an inner Q-network's parameters. Each
//! emitted network is scored greedily on a classic-control task and its mean
//! return is the meta-learner's reward. The crate also trains PPO/A2C
//! directly on the same tasks for comparison.

pub mod env;
pub mod error;
pub mod harness;
pub mod inner;
pub mod meta;
pub mod nn;
pub mod outer_env;
pub mod rng;
pub mod selftest;

pub use error::{Error, Result};
