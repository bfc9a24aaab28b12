//! Rollout storage and generalized advantage estimation.

use crate::search_space::Action;

/// Per-step rollout records, stored column-wise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, state: Vec<f64>, raw: Vec<f64>, action: Action, log_prob: f64, reward: f64, value: f64, done: bool) {
        debug_assert!((-1.0..=1.0).contains(&reward), "reward {reward} outside [-1, 1]");
        self.states.push(state);
        self.raw.push(raw);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn extend(&mut self, other: Trajectory) {
        self.states.extend(other.states);
        self.raw.extend(other.raw);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
    }

    /// True when every column has the same length and the data ends on an
    /// episode boundary.
    pub fn is_well_formed(&self) -> bool {
        let n = self.len();
        [self.states.len(), self.raw.len(), self.actions.len(), self.log_probs.len(), self.values.len(), self.dones.len()]
            .iter()
            .all(|&l| l == n)
            && self.dones.last().copied().unwrap_or(true)
    }

    /// Sum of rewards of each complete episode, in order.
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for (r, d) in self.rewards.iter().zip(&self.dones) {
            acc += r;
            if *d {
                out.push(acc);
                acc = 0.0;
            }
        }
        out
    }
}

/// Raw (unnormalized) GAE advantages and the matching value targets.
/// Episodes are complete, so nothing is bootstrapped past a done flag.
pub fn compute_gae(traj: &Trajectory, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if traj.dones[t] || t + 1 == n {
            (0.0, 0.0)
        } else {
            (traj.values[t + 1], next_adv)
        };
        let delta = traj.rewards[t] + gamma * next_value - traj.values[t];
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(&traj.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit variance.
pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}
