use crate::error::{Error, Result};

/// How the episode stood after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpisodeEnd {
    /// The episode continues into the next buffered step.
    Continues,
    /// Terminal state; no value beyond it.
    Terminated,
    /// Cut off by a time limit; bootstrap from the value of the state reached.
    Truncated { bootstrap_value: f64 },
}

/// One on-policy segment. All per-step arrays have equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer<A> {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<A>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub ends: Vec<EpisodeEnd>,
    /// Value of the state following the last step, used when that step
    /// does not end an episode.
    pub bootstrap_value: Option<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<A> Default for RolloutBuffer<A> {
    fn default() -> Self {
        RolloutBuffer {
            states: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            ends: Vec::new(),
            bootstrap_value: None,
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }
}

impl<A> RolloutBuffer<A> {
    pub fn push(&mut self, state: Vec<f64>, action: A, log_prob: f64, reward: f64, value: f64, end: EpisodeEnd) {
        self.states.push(state);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.ends.push(end);
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        *self = RolloutBuffer::default();
    }

    pub fn has_advantages(&self) -> bool {
        !self.is_empty() && self.advantages.len() == self.len()
    }

    /// Computes and stores advantages and returns.
    pub fn finish(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (adv, ret) = compute_gae(self, gamma, lambda)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }

    /// Rescales advantages to zero mean and unit standard deviation.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len();
        if n < 2 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std < 1e-12 {
            self.advantages.iter_mut().for_each(|a| *a -= mean);
            return;
        }
        self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
}

/// Generalized advantage estimation.
///
/// `δ_t = r_t + γ V_next(t) − V_t` where `V_next` is the next buffered value,
/// the bootstrap value, zero after termination, or the truncation bootstrap;
/// `A_t = δ_t + γλ A_{t+1}` within an episode. Returns `(advantages, returns)`
/// with `returns = advantages + values`.
pub fn compute_gae<A>(buf: &RolloutBuffer<A>, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = buf.len();
    if n == 0 {
        return Err(Error::EmptyBuffer);
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, continues) = match buf.ends[t] {
            EpisodeEnd::Continues if t + 1 < n => (buf.values[t + 1], true),
            EpisodeEnd::Continues => (
                buf.bootstrap_value
                    .ok_or_else(|| Error::Config("rollout buffer needs a bootstrap value".into()))?,
                false,
            ),
            EpisodeEnd::Terminated => (0.0, false),
            EpisodeEnd::Truncated { bootstrap_value } => (bootstrap_value, false),
        };
        let delta = buf.rewards[t] + gamma * next_value - buf.values[t];
        let carry = if continues { gamma * lambda * next_adv } else { 0.0 };
        adv[t] = delta + carry;
        next_adv = adv[t];
    }
    let ret = adv.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}
