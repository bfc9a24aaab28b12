//! Rollout collection, the PPO training loop, the random-search baseline
//! and the rig selection protocol.

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::env::{Environment, StepInfo};
use super::gae::Trajectory;
use super::policy::Policy;
use super::ppo::{ppo_update, Batch, PpoConfig, PpoStats};
use crate::nn::Adam;
use crate::search_space::RigState;

/// One environment step as logged to `trace.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub episode: u64,
    /// Step within the episode, from 0.
    pub t: usize,
    pub reward: f64,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: usize,
    /// Rollout workers; 1 keeps everything on the calling thread and fully
    /// deterministic.
    pub workers: usize,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 200_000,
            workers: 1,
            ppo: PpoConfig::default(),
        }
    }
}

/// Seed streams kept apart so training, test and re-evaluation scenes never
/// coincide.
pub mod seeds {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
        mix(seed.wrapping_mul(GOLDEN) ^ mix(stream.wrapping_add(1).wrapping_mul(GOLDEN) ^ index))
    }

    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const REEVAL: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const UPDATE: u64 = 5;
    pub const RANDOM: u64 = 6;
    pub const REPORT: u64 = 7;
    pub const BASELINE: u64 = 8;
    pub const PERCEPTION: u64 = 9;
    pub const INIT: u64 = 10;
}

/// A finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub rig: RigState,
    pub rewards: Vec<f64>,
    pub infos: Vec<StepInfo>,
    pub trajectory: Trajectory,
}

impl Episode {
    pub fn total(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

pub fn run_episode<E: Environment + ?Sized>(
    policy: &Policy,
    params: &[f64],
    env: &mut E,
    scene_seed: u64,
    rng: &mut StdRng,
    deterministic: bool,
) -> Episode {
    let spec = env.spec().clone();
    let mut state = env.reset(scene_seed);
    let mut ep = Episode {
        rig: RigState::empty(),
        rewards: Vec::new(),
        infos: Vec::new(),
        trajectory: Trajectory::default(),
    };
    loop {
        let d = policy.act(params, &spec, &state, rng, deterministic);
        let r = env.step(&d.action);
        ep.trajectory.push(state, d.raw, d.action, d.log_prob, r.reward, d.value, r.done);
        ep.rewards.push(r.reward);
        ep.infos.push(r.info);
        state = r.state;
        if r.done {
            break;
        }
    }
    ep.rig = env.rig().clone();
    ep
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub updates: Vec<PpoStats>,
    pub initial_entropy: f64,
    pub final_entropy: f64,
}

/// Collects whole episodes on one worker until `steps` steps are done.
fn collect<E: Environment>(
    policy: &Policy,
    params: &[f64],
    env: &mut E,
    steps: usize,
    seed: u64,
    worker: u64,
    first_episode: u64,
    round: u64,
) -> Vec<Episode> {
    let mut rng = StdRng::seed_from_u64(seeds::derive(seed, seeds::SAMPLING, (round << 16) | worker));
    let mut out = Vec::new();
    let mut done = 0;
    let mut k = first_episode;
    while done < steps {
        let scene = seeds::derive(seed, seeds::TRAIN, (worker << 40) | k);
        let ep = run_episode(policy, params, env, scene, &mut rng, false);
        done += ep.rewards.len();
        k += 1;
        out.push(ep);
    }
    out
}

/// Trains `params` with PPO. Each round every worker collects its share of
/// `rollout_steps` with a frozen copy of the policy, `between_rounds` runs
/// on the calling thread (e.g. to train a shared perception model from
/// the workers' samples), then one PPO update follows.
pub fn train<E: Environment + Send>(
    policy: &Policy,
    mut params: Vec<f64>,
    envs: &mut [E],
    cfg: &TrainConfig,
    seed: u64,
    mut between_rounds: impl FnMut(&mut [E]),
) -> TrainOutcome {
    assert!(!envs.is_empty());
    let workers = envs.len();
    let per_worker = cfg.ppo.rollout_steps.div_ceil(workers);
    let mut opt = Adam::new(params.len(), cfg.ppo.lr);
    let mut update_rng = StdRng::seed_from_u64(seeds::derive(seed, seeds::UPDATE, 0));
    let mut episode_counts = vec![0u64; workers];
    let initial_entropy = policy.entropy(&params);
    let mut trace = Vec::new();
    let mut updates = Vec::new();
    let (mut step, mut episode) = (0u64, 0u64);
    let mut round = 0u64;
    while (step as usize) < cfg.total_steps {
        let snapshot = &params;
        let results: Vec<Vec<Episode>> = if workers == 1 {
            vec![collect(policy, snapshot, &mut envs[0], per_worker, seed, 0, episode_counts[0], round)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = envs
                    .iter_mut()
                    .enumerate()
                    .map(|(w, env)| {
                        let first = episode_counts[w];
                        s.spawn(move || collect(policy, snapshot, env, per_worker, seed, w as u64, first, round))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
            })
        };
        between_rounds(envs);
        let mut traj = Trajectory::default();
        for (w, eps) in results.into_iter().enumerate() {
            episode_counts[w] += eps.len() as u64;
            for ep in eps {
                for (t, (r, info)) in ep.rewards.iter().zip(&ep.infos).enumerate() {
                    trace.push(TraceRow { step, episode, t, reward: *r, info: info.clone() });
                    step += 1;
                }
                episode += 1;
                traj.extend(ep.trajectory);
            }
        }
        let batch = Batch::from_trajectory(&traj, &cfg.ppo);
        updates.push(ppo_update(policy, &mut params, &mut opt, &batch, &cfg.ppo, &mut update_rng));
        round += 1;
    }
    TrainOutcome {
        final_entropy: policy.entropy(&params),
        initial_entropy,
        params,
        trace,
        updates,
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_rig: RigState,
    pub best_return: f64,
    pub returns: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Uniformly random actions at every step.
pub fn random_search<E: Environment + ?Sized>(env: &mut E, episodes: usize, seed: u64) -> SearchOutcome {
    let spec = env.spec().clone();
    let mut rng = StdRng::seed_from_u64(seeds::derive(seed, seeds::RANDOM, 0));
    let mut out = SearchOutcome {
        best_rig: RigState::empty(),
        best_return: f64::NEG_INFINITY,
        returns: Vec::with_capacity(episodes),
        trace: Vec::new(),
    };
    let mut step = 0;
    for k in 0..episodes as u64 {
        env.reset(seeds::derive(seed, seeds::TRAIN, k));
        let mut total = 0.0;
        for t in 0.. {
            let a = spec.sample_uniform(&mut rng);
            let r = env.step(&a);
            total += r.reward;
            out.trace.push(TraceRow { step, episode: k, t, reward: r.reward, info: r.info });
            step += 1;
            if r.done {
                break;
            }
        }
        out.returns.push(total);
        if total > out.best_return {
            out.best_return = total;
            out.best_rig = env.rig().clone();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_test: usize,
    pub top_k: usize,
    pub n_reval: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_test: 100,
            top_k: 20,
            n_reval: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub rig: RigState,
    pub episode_return: f64,
    /// Mean reward over the re-evaluation scenes.
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub selected: Candidate,
    /// The top-k rigs in descending episode-return order.
    pub candidates: Vec<Candidate>,
    pub test_returns: Vec<f64>,
}

/// Runs test episodes, keeps the top-k rigs by episode return,
/// re-evaluates each on the same fresh scenes and returns the best; ties
/// go to the rig with fewer cameras.
pub fn evaluate_protocol<E: Environment + ?Sized>(
    policy: &Policy,
    params: &[f64],
    env: &mut E,
    cfg: &ProtocolConfig,
    seed: u64,
) -> ProtocolOutcome {
    let mut rng = StdRng::seed_from_u64(seeds::derive(seed, seeds::SAMPLING, u64::MAX));
    let mut episodes: Vec<(RigState, f64)> = (0..cfg.n_test as u64)
        .map(|k| {
            let ep = run_episode(policy, params, env, seeds::derive(seed, seeds::TEST, k), &mut rng, false);
            (ep.rig.clone(), ep.total())
        })
        .collect();
    let test_returns = episodes.iter().map(|e| e.1).collect();
    // Stable sort keeps test order among equal returns.
    episodes.sort_by(|a, b| b.1.total_cmp(&a.1));
    episodes.truncate(cfg.top_k.max(1));
    let candidates: Vec<Candidate> = episodes
        .into_iter()
        .map(|(rig, episode_return)| {
            let score = (0..cfg.n_reval as u64)
                .map(|k| env.score_rig(&rig, seeds::derive(seed, seeds::REEVAL, k)))
                .sum::<f64>()
                / cfg.n_reval.max(1) as f64;
            Candidate { rig, episode_return, score }
        })
        .collect();
    let selected = candidates
        .iter()
        .min_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.rig.cameras.len().cmp(&b.rig.cameras.len()))
        })
        .expect("at least one candidate")
        .clone();
    ProtocolOutcome {
        selected,
        candidates,
        test_returns,
    }
}
