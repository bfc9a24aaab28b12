//! Clipped-surrogate policy optimization with exact gradients.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gae::{compute_gae, normalize, Trajectory};
use super::policy::{Policy, LOG_STD_MAX, LOG_STD_MIN};
use crate::nn::{clip_grad_norm, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Environment steps per update (rounded up to whole episodes).
    pub rollout_steps: usize,
    pub hidden: usize,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            rollout_steps: 2048,
            hidden: 64,
            log_std_init: -0.5,
        }
    }
}

/// Training data for one update: trajectory columns plus normalized
/// advantages and value targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn from_trajectory(traj: &Trajectory, cfg: &PpoConfig) -> Self {
        let (mut advantages, returns) = compute_gae(traj, cfg.gamma, cfg.lambda);
        normalize(&mut advantages);
        Batch {
            states: traj.states.clone(),
            raw: traj.raw.clone(),
            old_log_probs: traj.log_probs.clone(),
            advantages,
            returns,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    /// Mean clipped surrogate (to be maximized).
    pub surrogate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of `(r - 1) - ln r`, a non-negative KL estimate.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Total loss `-surrogate + c_v * mse(V, R) - c_e * entropy` over the
/// samples `idx`, and its gradient.
pub fn loss_and_grad(policy: &Policy, params: &[f64], batch: &Batch, idx: &[usize], cfg: &PpoConfig) -> (f64, Vec<f64>, PpoStats) {
    let mut grad = vec![0.0; params.len()];
    let (_, ls_range, _) = policy.ranges();
    let log_std = policy.log_std(params);
    let inv_std: Vec<f64> = log_std.iter().map(|l| (-l).exp()).collect();
    let n = idx.len() as f64;
    let mut stats = PpoStats::default();
    let mut g_log_std = vec![0.0; log_std.len()];
    for &i in idx {
        let e = policy.eval(params, &batch.states[i]);
        let mean = e.mean();
        let raw = &batch.raw[i];
        let logp = policy.log_prob(mean, &log_std, raw);
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let unclipped_active = ratio * adv <= clipped * adv;
        stats.surrogate += (ratio * adv).min(clipped * adv) / n;
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += 1.0 / n;
        }
        stats.approx_kl += (ratio - 1.0 - ratio.ln()) / n;
        if unclipped_active {
            // d(-r A)/d logp = -r A.
            let g_logp = -ratio * adv / n;
            let g_mean: Vec<f64> = mean
                .iter()
                .zip(raw)
                .zip(&inv_std)
                .map(|((m, u), is)| g_logp * (u - m) * is * is)
                .collect();
            policy.actor_backward(params, &e, &g_mean, &mut grad);
            for (d, ((m, u), is)) in mean.iter().zip(raw).zip(&inv_std).enumerate() {
                let z = (u - m) * is;
                g_log_std[d] += g_logp * (z * z - 1.0);
            }
        }
        let v_err = e.value() - batch.returns[i];
        stats.value_loss += v_err * v_err / n;
        policy.critic_backward(params, &e, cfg.value_coef * 2.0 * v_err / n, &mut grad);
    }
    stats.entropy = policy.entropy(params);
    stats.policy_loss = -stats.surrogate;
    for (d, p) in ls_range.clone().enumerate() {
        let raw_ls = params[p];
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
            grad[p] += g_log_std[d] - cfg.entropy_coef;
        }
    }
    let loss = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    (loss, grad, stats)
}

/// Several epochs of shuffled minibatch Adam steps on one batch. Returns
/// statistics averaged over the minibatches of the final epoch.
pub fn ppo_update(policy: &Policy, params: &mut [f64], opt: &mut Adam, batch: &Batch, cfg: &PpoConfig, rng: &mut impl Rng) -> PpoStats {
    assert!(!batch.is_empty(), "ppo_update needs a non-empty batch");
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut last = PpoStats::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut acc = PpoStats::default();
        let mut count = 0.0;
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let (_, mut grad, s) = loss_and_grad(policy, params, batch, chunk, cfg);
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(params, &grad);
            for (a, b) in [
                (&mut acc.surrogate, s.surrogate),
                (&mut acc.policy_loss, s.policy_loss),
                (&mut acc.value_loss, s.value_loss),
                (&mut acc.entropy, s.entropy),
                (&mut acc.approx_kl, s.approx_kl),
                (&mut acc.clip_fraction, s.clip_fraction),
            ] {
                *a += b;
            }
            count += 1.0;
        }
        if epoch + 1 == cfg.epochs {
            last = PpoStats {
                surrogate: acc.surrogate / count,
                policy_loss: acc.policy_loss / count,
                value_loss: acc.value_loss / count,
                entropy: acc.entropy / count,
                approx_kl: acc.approx_kl / count,
                clip_fraction: acc.clip_fraction / count,
            };
        }
    }
    last
}
