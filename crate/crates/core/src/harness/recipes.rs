//! Smaller experiments behind the command-line tools.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::config::{EnvKind, RunConfig};
use super::run::{load_run, selected_text, AnyEnv, SELECTED_FILE, TRACE_FILE};
use super::metrics::SelectedRig;
use super::trace::{write_csv, write_trace};
use crate::agent::train::seeds;
use crate::agent::{evaluate_protocol, random_search, PmSlot, ProtocolOutcome, RigEnv, SearchOutcome, StereoEnv, ToyEnv};
use crate::error::Result;
use crate::perception::{train_step, PerceptionBuffer, PerceptionConfig, PerceptionModel, Sample};
use crate::search_space::{stereo_action_spec, CameraConfig};
use crate::sim_stereo::{label, render, sample_scene};

/// A sample from one to three random cameras in the stereo placement box.
pub fn random_stereo_sample(model: &PerceptionModel, rng: &mut StdRng) -> Sample {
    let spec = stereo_action_spec(false);
    let scene = sample_scene(rng.random());
    let n = rng.random_range(1..=3);
    let cams: Vec<CameraConfig> = (0..n).map(|_| spec.camera_from(&spec.sample_uniform(rng))).collect();
    Sample {
        features: cams.iter().map(|c| model.features(&render(&scene, c, None))).collect(),
        label: label(&scene, &cams).expect("at least one camera"),
    }
}

/// Trains a fresh perception model on a fixed buffer of `samples`
/// samples; returns the loss of every step.
pub fn pm_overfit(cfg: &PerceptionConfig, samples: usize, steps: usize, seed: u64) -> Vec<f64> {
    let model = PerceptionModel::new(cfg.clone());
    let mut rng = StdRng::seed_from_u64(seed);
    let mut params = model.init(&mut rng);
    let mut opt = model.optimizer();
    let mut buffer = PerceptionBuffer::new(samples.max(1));
    for _ in 0..samples {
        buffer.push(random_stereo_sample(&model, &mut rng));
    }
    (0..steps)
        .map(|_| train_step(&model, &mut params, &mut opt, &buffer, cfg.batch, &mut rng))
        .collect()
}

#[derive(Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

pub fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let rows: Vec<LossRow> = losses.iter().enumerate().map(|(step, &loss)| LossRow { step, loss }).collect();
    write_csv(path, "losses", 1, &rows)
}

/// Random search in the configured environment. Stereo runs co-train a
/// fresh perception model as they go, exactly like PPO runs. Writes
/// `trace.csv` and `best_rig.txt` into `dir`.
pub fn random_search_run(cfg: &RunConfig, episodes: usize, dir: &Path) -> Result<SearchOutcome> {
    std::fs::create_dir_all(dir)?;
    cfg.save(&dir.join(super::run::CONFIG_FILE))?;
    let out = match cfg.env {
        EnvKind::Stereo => {
            let pm = crate::perception::PmTrainer::new(cfg.perception.clone(), seeds::derive(cfg.seed, seeds::PERCEPTION, 0));
            random_search(&mut StereoEnv::new(cfg.stereo.clone(), PmSlot::Online(pm)), episodes, cfg.seed)
        }
        EnvKind::Rig => random_search(&mut RigEnv::new(cfg.rig.clone())?, episodes, cfg.seed),
        EnvKind::Toy => random_search(&mut ToyEnv::default(), episodes, cfg.seed),
    };
    write_trace(&dir.join(TRACE_FILE), &out.trace)?;
    let best = SelectedRig {
        cameras: out.best_rig.cameras.clone(),
        light: out.best_rig.light,
        score: out.best_return,
        episode_return: out.best_return,
    };
    std::fs::write(dir.join("best_rig.txt"), selected_text(&best))?;
    Ok(out)
}

/// Runs the rig-selection protocol on a saved run with `seed` and writes
/// `selected_rig.txt` into `out`.
pub fn protocol_run(dir: &Path, seed: Option<u64>, out: &Path) -> Result<ProtocolOutcome> {
    let (cfg, art) = load_run(dir)?;
    if cfg.env == EnvKind::Toy {
        return Err(crate::Error::Config("the toy task builds no rig".into()));
    }
    let mut env = AnyEnv::build(&cfg, art.pm.as_ref())?;
    let p = evaluate_protocol(&art.policy, &art.params, env.as_dyn(), &cfg.protocol, seed.unwrap_or(cfg.seed));
    std::fs::create_dir_all(out)?;
    let sel = SelectedRig {
        cameras: p.selected.rig.cameras.clone(),
        light: p.selected.rig.light,
        score: p.selected.score,
        episode_return: p.selected.episode_return,
    };
    std::fs::write(out.join(SELECTED_FILE), selected_text(&sel))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overfitting_a_small_buffer_drives_the_loss_down() {
        let losses = pm_overfit(&PerceptionConfig::default(), 8, 1500, 3);
        let first = losses[0];
        let last = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(last < 0.1 * first, "{first} -> {last}");
    }
}
