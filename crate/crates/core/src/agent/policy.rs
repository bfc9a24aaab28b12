//! Tanh-squashed Gaussian actor and a separate value critic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{Mlp, Tape};
use crate::search_space::{Action, ActionSpec};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Network shapes. Parameters are one flat vector laid out as
/// `[actor | log_std | critic]`.
#[derive(Debug, Clone)]
pub struct Policy {
    actor: Mlp,
    critic: Mlp,
    /// Half-widths of the action box; enters the log-density of the
    /// squashed action.
    log_half_widths: Vec<f64>,
}

/// One sampled (or deterministic) decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Pre-squash Gaussian sample.
    pub raw: Vec<f64>,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
}

/// Per-state outputs kept for the backward pass.
pub(crate) struct Eval {
    pub actor: Tape,
    pub critic: Tape,
}

impl Eval {
    pub fn mean(&self) -> &[f64] {
        self.actor.output()
    }

    pub fn value(&self) -> f64 {
        self.critic.output()[0]
    }
}

/// `log(1 - tanh(u)^2)`, computed stably.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

impl Policy {
    pub fn new(state_dim: usize, spec: &ActionSpec, hidden: usize) -> Self {
        let n = spec.dim_count();
        Policy {
            actor: Mlp::new(&[state_dim, hidden, hidden, n]),
            critic: Mlp::new(&[state_dim, hidden, hidden, 1]),
            log_half_widths: spec.dims.iter().map(|d| ((d.hi - d.lo) / 2.0).ln()).collect(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.action_dim() + self.critic.param_count()
    }

    /// Small initial action means, `log_std_init` for every dim.
    pub fn init(&self, rng: &mut impl Rng, log_std_init: f64) -> Vec<f64> {
        let mut p = self.actor.init(rng, 0.01);
        p.extend(std::iter::repeat_n(log_std_init, self.action_dim()));
        p.extend(self.critic.init(rng, 1.0));
        p
    }

    pub(crate) fn ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let a = self.actor.param_count();
        let s = a + self.action_dim();
        (0..a, a..s, s..self.param_count())
    }

    /// Effective (clamped) log standard deviations.
    pub fn log_std(&self, params: &[f64]) -> Vec<f64> {
        let (_, ls, _) = self.ranges();
        params[ls].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    pub(crate) fn eval(&self, params: &[f64], state: &[f64]) -> Eval {
        let (a, _, c) = self.ranges();
        Eval {
            actor: self.actor.forward(&params[a], state),
            critic: self.critic.forward(&params[c], state),
        }
    }

    pub(crate) fn actor_backward(&self, params: &[f64], e: &Eval, g_mean: &[f64], grad: &mut [f64]) {
        let (a, _, _) = self.ranges();
        self.actor.backward(&params[a.clone()], &e.actor, g_mean, &mut grad[a]);
    }

    pub(crate) fn critic_backward(&self, params: &[f64], e: &Eval, g_value: f64, grad: &mut [f64]) {
        let (_, _, c) = self.ranges();
        self.critic.backward(&params[c.clone()], &e.critic, &[g_value], &mut grad[c]);
    }

    pub fn value(&self, params: &[f64], state: &[f64]) -> f64 {
        let (_, _, c) = self.ranges();
        self.critic.forward(&params[c], state).output()[0]
    }

    /// Log-density of the squashed action produced by `raw`, including the
    /// tanh and box-scaling Jacobians.
    pub fn log_prob(&self, mean: &[f64], log_std: &[f64], raw: &[f64]) -> f64 {
        mean.iter()
            .zip(log_std)
            .zip(raw)
            .zip(&self.log_half_widths)
            .map(|(((m, ls), u), lw)| {
                let z = (u - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LOG_TWO_PI - log_tanh_jacobian(*u) - lw
            })
            .sum()
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self, params: &[f64]) -> f64 {
        self.log_std(params).iter().map(|ls| 0.5 + HALF_LOG_TWO_PI + ls).sum()
    }

    /// Samples an action, or returns the squashed mean when
    /// `deterministic`.
    pub fn act(&self, params: &[f64], spec: &ActionSpec, state: &[f64], rng: &mut impl Rng, deterministic: bool) -> Decision {
        let e = self.eval(params, state);
        let log_std = self.log_std(params);
        let raw: Vec<f64> = if deterministic {
            e.mean().to_vec()
        } else {
            e.mean()
                .iter()
                .zip(&log_std)
                .map(|(m, ls)| {
                    let n: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * n
                })
                .collect()
        };
        Decision {
            log_prob: self.log_prob(e.mean(), &log_std, &raw),
            action: spec.squash(&raw),
            value: e.value(),
            raw,
        }
    }
}
