//! Training runs, their artifacts, and re-evaluation from a run directory.

use std::path::Path;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::config::{EnvKind, RunConfig};
use super::metrics::{
    baseline_sweep, camera_histogram, coverage_table, light_summary, placement_heatmaps, test_episodes, write_tables,
    MetricsReport, SelectedRig, REPORT_VERSION,
};
use super::plots::emit_plots;
use super::trace::{write_csv, write_trace, UpdateRecord};
use crate::agent::train::seeds;
use crate::agent::{
    evaluate_protocol, train, Environment, PmSlot, Policy, RigEnv, StereoEnv, ToyEnv, TrainOutcome,
};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::perception::{PerceptionConfig, PerceptionModel, PmTrainer};
use crate::search_space::{rig_action_spec, stereo_action_spec, ActionSpec};
use crate::sim_rig::rig_to_text;

pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const POLICY_FILE: &str = "policy.ckpt";
pub const PM_FILE: &str = "pm.ckpt";
pub const METRICS_FILE: &str = "metrics.json";
pub const SELECTED_FILE: &str = "selected_rig.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHeader {
    pub env: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionHeader {
    pub config: PerceptionConfig,
    pub version: u64,
}

/// A trained perception model.
#[derive(Debug, Clone)]
pub struct TrainedPm {
    pub model: PerceptionModel,
    pub params: Vec<f64>,
    pub version: u64,
}

impl TrainedPm {
    pub fn frozen(&self) -> PmSlot {
        PmSlot::Frozen {
            model: self.model.clone(),
            params: Arc::new(self.params.clone()),
            version: self.version,
            pending: Vec::new(),
        }
    }
}

/// What a run leaves behind besides its logs.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub policy: Policy,
    pub params: Vec<f64>,
    pub pm: Option<TrainedPm>,
}

/// One environment of the configured kind, for evaluation. Stereo
/// environments get a read-only copy of `pm`.
pub enum AnyEnv {
    Stereo(StereoEnv),
    Rig(RigEnv),
    Toy(ToyEnv),
}

impl AnyEnv {
    pub fn build(cfg: &RunConfig, pm: Option<&TrainedPm>) -> Result<Self> {
        Ok(match cfg.env {
            EnvKind::Stereo => {
                let pm = pm.ok_or_else(|| Error::Checkpoint("stereo runs need a perception model".into()))?;
                AnyEnv::Stereo(StereoEnv::new(cfg.stereo.clone(), pm.frozen()))
            }
            EnvKind::Rig => AnyEnv::Rig(RigEnv::new(cfg.rig.clone())?),
            EnvKind::Toy => AnyEnv::Toy(ToyEnv::default()),
        })
    }

    pub fn as_dyn(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::Stereo(e) => e,
            AnyEnv::Rig(e) => e,
            AnyEnv::Toy(e) => e,
        }
    }
}

/// The action space of the configured environment.
pub fn action_spec(cfg: &RunConfig) -> Result<ActionSpec> {
    Ok(match cfg.env {
        EnvKind::Stereo => stereo_action_spec(cfg.stereo.illumination),
        EnvKind::Rig => rig_action_spec(cfg.rig.mode, &cfg.rig.roof)?,
        EnvKind::Toy => ToyEnv::default().spec().clone(),
    })
}

pub fn build_policy(cfg: &RunConfig, env: &dyn Environment) -> Policy {
    Policy::new(env.state_dim(), env.spec(), cfg.train.ppo.hidden)
}

fn initial_params(cfg: &RunConfig, policy: &Policy) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seeds::derive(cfg.seed, seeds::INIT, 0));
    policy.init(&mut rng, cfg.train.ppo.log_std_init)
}

/// Trains according to `cfg`. Stereo runs with one worker train the
/// perception model inside the environment after every step; with more
/// workers the environments hold read-only snapshots and the calling
/// thread trains on their samples between rollout rounds.
pub fn train_run(cfg: &RunConfig) -> Result<(TrainOutcome, Artifacts)> {
    let workers = cfg.train.workers;
    let seed = cfg.seed;
    match cfg.env {
        EnvKind::Stereo => {
            let pm_seed = seeds::derive(seed, seeds::PERCEPTION, 0);
            let mut master = PmTrainer::new(cfg.perception.clone(), pm_seed);
            if workers == 1 {
                let mut env = StereoEnv::new(cfg.stereo.clone(), PmSlot::Online(master));
                let policy = build_policy(cfg, &env);
                let p0 = initial_params(cfg, &policy);
                let out = train(&policy, p0, std::slice::from_mut(&mut env), &cfg.train, seed, |_| {});
                let PmSlot::Online(t) = env.pm() else { unreachable!("online slot") };
                let pm = TrainedPm { model: t.model.clone(), params: t.params.clone(), version: t.version };
                let art = Artifacts { policy, params: out.params.clone(), pm: Some(pm) };
                return Ok((out, art));
            }
            let snapshot = |t: &PmTrainer| TrainedPm { model: t.model.clone(), params: t.params.clone(), version: t.version };
            let mut envs: Vec<StereoEnv> = (0..workers)
                .map(|_| StereoEnv::new(cfg.stereo.clone(), snapshot(&master).frozen()))
                .collect();
            let policy = build_policy(cfg, &envs[0]);
            let p0 = initial_params(cfg, &policy);
            let out = train(&policy, p0, &mut envs, &cfg.train, seed, |envs| {
                for e in envs.iter_mut() {
                    for s in e.take_pending() {
                        master.observe(s);
                    }
                }
                let fresh = Arc::new(master.params.clone());
                for e in envs.iter_mut() {
                    if let PmSlot::Frozen { params, version, .. } = e.pm_mut() {
                        *params = fresh.clone();
                        *version = master.version;
                    }
                }
            });
            let art = Artifacts { policy, params: out.params.clone(), pm: Some(snapshot(&master)) };
            Ok((out, art))
        }
        EnvKind::Rig => {
            let mut envs = (0..workers).map(|_| RigEnv::new(cfg.rig.clone())).collect::<Result<Vec<_>>>()?;
            let policy = build_policy(cfg, &envs[0]);
            let p0 = initial_params(cfg, &policy);
            let out = train(&policy, p0, &mut envs, &cfg.train, seed, |_| {});
            let art = Artifacts { policy, params: out.params.clone(), pm: None };
            Ok((out, art))
        }
        EnvKind::Toy => {
            let mut envs = vec![ToyEnv::default(); workers];
            let policy = build_policy(cfg, &envs[0]);
            let p0 = initial_params(cfg, &policy);
            let out = train(&policy, p0, &mut envs, &cfg.train, seed, |_| {});
            let art = Artifacts { policy, params: out.params.clone(), pm: None };
            Ok((out, art))
        }
    }
}

/// The metrics report of trained artifacts. Depends only on `cfg` and
/// `art`; the perception model is frozen throughout.
pub fn compute_report(cfg: &RunConfig, art: &Artifacts) -> Result<MetricsReport> {
    let mut any = AnyEnv::build(cfg, art.pm.as_ref())?;
    let env = any.as_dyn();
    let spec = env.spec().clone();
    let det = cfg.deterministic_tests();
    let eps = test_episodes(&art.policy, &art.params, env, cfg.report.test_episodes, cfg.seed, det);
    let n = eps.len().max(1) as f64;
    let mean_test_return = eps.iter().map(|e| e.total()).sum::<f64>() / n;
    let mean_final_coverage = eps
        .iter()
        .map(|e| e.infos.last().map_or(0.0, |i| i.coverage))
        .sum::<f64>()
        / n;
    let mut report = MetricsReport {
        version: REPORT_VERSION,
        env: cfg.env,
        mode: (cfg.env == EnvKind::Rig).then_some(cfg.rig.mode),
        seed: cfg.seed,
        test_episodes: eps.len(),
        deterministic: det,
        mean_test_return,
        mean_final_coverage,
        camera_histogram: camera_histogram(&eps, spec.slots()),
        heatmaps: None,
        coverage: None,
        baseline: None,
        light: None,
        selected: None,
    };
    if cfg.env == EnvKind::Toy {
        return Ok(report);
    }
    report.heatmaps = placement_heatmaps(&eps, &spec, cfg.report.heatmap_bins);
    if cfg.env == EnvKind::Stereo {
        report.coverage = Some(coverage_table(&eps));
        let pm = art.pm.as_ref().expect("stereo env built");
        let r = &cfg.report;
        report.baseline = Some(baseline_sweep(&pm.model, &pm.params, r.baseline_scenes, r.baseline_points, r.baseline_z, cfg.seed)?);
        if cfg.stereo.illumination {
            let light_eps = test_episodes(&art.policy, &art.params, env, r.light_episodes, cfg.seed, true);
            report.light = Some(light_summary(&light_eps));
        }
    }
    let p = evaluate_protocol(&art.policy, &art.params, env, &cfg.protocol, cfg.seed);
    report.selected = Some(SelectedRig {
        cameras: p.selected.rig.cameras.clone(),
        light: p.selected.rig.light,
        score: p.selected.score,
        episode_return: p.selected.episode_return,
    });
    Ok(report)
}

pub fn report_json(report: &MetricsReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn selected_text(sel: &SelectedRig) -> String {
    let mut s = rig_to_text(&sel.cameras);
    if let Some(l) = sel.light {
        s.push_str(&format!("# light angle {} intensity {}\n", l.angle, l.intensity));
    }
    s.push_str(&format!("# score {}\n", sel.score));
    s
}

/// Writes `metrics.json`, the CSV tables and the selected rig.
pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::write(dir.join(METRICS_FILE), report_json(report)?)?;
    write_tables(dir, report)?;
    if let Some(sel) = &report.selected {
        std::fs::write(dir.join(SELECTED_FILE), selected_text(sel))?;
    }
    Ok(())
}

pub fn save_artifacts(dir: &Path, cfg: &RunConfig, art: &Artifacts) -> Result<()> {
    let header = PolicyHeader {
        env: cfg.env,
        state_dim: art.policy.state_dim(),
        action_dim: art.policy.action_dim(),
        hidden: cfg.train.ppo.hidden,
    };
    checkpoint::save(&dir.join(POLICY_FILE), &header, &art.params)?;
    if let Some(pm) = &art.pm {
        let header = PerceptionHeader { config: pm.model.config.clone(), version: pm.version };
        checkpoint::save(&dir.join(PM_FILE), &header, &pm.params)?;
    }
    Ok(())
}

/// Trains, then writes the config, `trace.csv`, `updates.csv`,
/// checkpoints, the metrics report with its tables, and plot scripts
/// into `dir`.
pub fn run_experiment(cfg: &RunConfig, dir: &Path) -> Result<MetricsReport> {
    std::fs::create_dir_all(dir)?;
    cfg.save(&dir.join(CONFIG_FILE))?;
    let (out, art) = train_run(cfg)?;
    write_trace(&dir.join(TRACE_FILE), &out.trace)?;
    let updates: Vec<UpdateRecord> = out.updates.iter().enumerate().map(|(i, s)| UpdateRecord::new(i, s)).collect();
    write_csv(&dir.join("updates.csv"), "updates", 1, &updates)?;
    save_artifacts(dir, cfg, &art)?;
    let report = compute_report(cfg, &art)?;
    write_report(dir, &report)?;
    emit_plots(dir)?;
    Ok(report)
}

/// Loads the config and checkpoints of a run directory.
pub fn load_run(dir: &Path) -> Result<(RunConfig, Artifacts)> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let pm = if cfg.env == EnvKind::Stereo {
        let path = dir.join(PM_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let (h, params): (PerceptionHeader, Vec<f64>) = checkpoint::load(&path)?;
        let model = PerceptionModel::new(h.config);
        if params.len() != model.param_count() {
            return Err(Error::Checkpoint("perception parameter count mismatch".into()));
        }
        Some(TrainedPm { model, params, version: h.version })
    } else {
        None
    };
    let path = dir.join(POLICY_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let (h, params): (PolicyHeader, Vec<f64>) = checkpoint::load(&path)?;
    let mut any = AnyEnv::build(&cfg, pm.as_ref())?;
    let policy = build_policy(&cfg, any.as_dyn());
    if h.env != cfg.env
        || h.state_dim != policy.state_dim()
        || h.action_dim != policy.action_dim()
        || params.len() != policy.param_count()
    {
        return Err(Error::Checkpoint("policy checkpoint does not match the run config".into()));
    }
    Ok((cfg, Artifacts { policy, params, pm }))
}

/// Recomputes the metrics report of a run directory from its checkpoints.
pub fn evaluate_run(dir: &Path) -> Result<MetricsReport> {
    let (cfg, art) = load_run(dir)?;
    compute_report(&cfg, &art)
}
