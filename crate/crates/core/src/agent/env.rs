//! Episodic environments the camera designer acts in.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::perception::{featurize, PerceptionModel, PmTrainer, Sample};
use crate::search_space::{
    apply, encode_state, rig_action_spec, stereo_action_spec, Action, ActionDim, ActionSpec, CameraConfig, DimRole,
    RigMode, RigState, RoofConfig, Semantics, MOUNT_HEIGHT_RANGE,
};
use crate::sim_rig::{rig_reward, sample_traffic, vehicle_cells, Scenario, TrafficConfig, TrafficScene, VisibilityModel};
use crate::sim_stereo::{coverage, label, render, sample_scene, LightModel, Observation, SphereScene};

/// Diagnostics attached to each step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub cameras: usize,
    /// Stereo: cameras seeing the sphere under full light. Rig: fraction of
    /// vehicle cells seen.
    pub coverage: f64,
    /// Perception batch loss of the update that followed this step.
    pub pm_loss: Option<f64>,
    /// Absolute depth error behind the reward.
    pub l1: Option<f64>,
    /// Perception parameter version the reward was computed with.
    pub pm_version: Option<u64>,
    /// Sphere pixels lit across all cameras.
    pub lit_pixels: Option<usize>,
    pub light_intensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub trait Environment {
    fn spec(&self) -> &ActionSpec;
    fn state_dim(&self) -> usize;
    /// Starts an episode on the scene drawn from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> StepResult;
    /// The rig built so far in the current episode.
    fn rig(&self) -> &RigState;
    /// Reward of a finished rig on the scene drawn from `seed`, without
    /// side effects on any learned component.
    fn score_rig(&mut self, rig: &RigState, seed: u64) -> f64;
}

// ---------------------------------------------------------------- stereo

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoConfig {
    /// Adds the spot light's angle and intensity to the action space.
    pub illumination: bool,
    /// Depth error mapped to reward -1.
    pub l_scale: f64,
    pub light: LightModel,
}

impl Default for StereoConfig {
    fn default() -> Self {
        StereoConfig {
            illumination: false,
            l_scale: 30.0,
            light: LightModel::default(),
        }
    }
}

/// Where the perception model used for rewards lives.
#[derive(Debug, Clone)]
pub enum PmSlot {
    /// Trained in place after every step.
    Online(PmTrainer),
    /// Read-only snapshot; samples queue up for an external trainer.
    Frozen {
        model: PerceptionModel,
        params: Arc<Vec<f64>>,
        version: u64,
        pending: Vec<Sample>,
    },
}

impl PmSlot {
    pub fn model(&self) -> &PerceptionModel {
        match self {
            PmSlot::Online(t) => &t.model,
            PmSlot::Frozen { model, .. } => model,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            PmSlot::Online(t) => &t.params,
            PmSlot::Frozen { params, .. } => params,
        }
    }

    pub fn version(&self) -> u64 {
        match self {
            PmSlot::Online(t) => t.version,
            PmSlot::Frozen { version, .. } => *version,
        }
    }
}

/// Reward from a depth error: 1 at zero error, -1 at `l_scale` or more.
pub fn depth_reward(l1: f64, l_scale: f64) -> f64 {
    (1.0 - 2.0 * l1 / l_scale).clamp(-1.0, 1.0)
}

/// Reward of a rig's observations; -1 without cameras.
pub fn stereo_reward(model: &PerceptionModel, params: &[f64], features: &[Vec<f64>], label: Option<f64>, l_scale: f64) -> f64 {
    match (features.is_empty(), label) {
        (false, Some(y)) => depth_reward((model.predict(params, features).expect("non-empty") - y).abs(), l_scale),
        _ => -1.0,
    }
}

pub const STEREO_OBS_DIM: usize = 3;

#[derive(Debug, Clone)]
pub struct StereoEnv {
    pub config: StereoConfig,
    spec: ActionSpec,
    pm: PmSlot,
    scene: SphereScene,
    state: RigState,
    features: Vec<Vec<f64>>,
    summaries: Vec<Vec<f64>>,
}

impl StereoEnv {
    pub fn new(config: StereoConfig, pm: PmSlot) -> Self {
        StereoEnv {
            spec: stereo_action_spec(config.illumination),
            config,
            pm,
            scene: sample_scene(0),
            state: RigState::empty(),
            features: Vec::new(),
            summaries: Vec::new(),
        }
    }

    pub fn pm(&self) -> &PmSlot {
        &self.pm
    }

    pub fn pm_mut(&mut self) -> &mut PmSlot {
        &mut self.pm
    }

    pub fn scene(&self) -> &SphereScene {
        &self.scene
    }

    /// Samples queued by a frozen slot since the last call.
    pub fn take_pending(&mut self) -> Vec<Sample> {
        match &mut self.pm {
            PmSlot::Frozen { pending, .. } => std::mem::take(pending),
            PmSlot::Online(_) => Vec::new(),
        }
    }

    fn observe(&self, cam: &CameraConfig, light: Option<crate::search_space::SpotLight>) -> Observation {
        match light {
            Some(l) => render(&self.scene, cam, Some((&l, &self.config.light))),
            None => render(&self.scene, cam, None),
        }
    }

    fn summary(obs: &Observation) -> Vec<f64> {
        let f = featurize(obs);
        vec![f.flag, f.u, f.area]
    }
}

impl Environment for StereoEnv {
    fn spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn state_dim(&self) -> usize {
        self.spec.state_dim(STEREO_OBS_DIM)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.scene = sample_scene(seed);
        self.state = RigState::empty();
        self.features.clear();
        self.summaries.clear();
        encode_state(&self.state, &self.spec, &self.summaries, STEREO_OBS_DIM)
    }

    fn step(&mut self, action: &Action) -> StepResult {
        let before = self.state.cameras.len();
        self.state = apply(&self.state, action, &self.spec);
        let light = self.state.light;
        // Without a light, earlier views are unchanged; with one, every
        // view depends on the current light.
        let first = if light.is_some() { 0 } else { before };
        self.features.truncate(first);
        self.summaries.truncate(first);
        let mut lit = 0;
        for cam in self.state.cameras[first..].to_vec() {
            let obs = self.observe(&cam, light);
            lit += obs.image.nonzero_count();
            self.features.push(self.pm.model().features(&obs));
            self.summaries.push(Self::summary(&obs));
        }
        let cams = &self.state.cameras;
        let covered = if light.is_some() {
            coverage(&self.scene, cams)
        } else {
            self.summaries.iter().filter(|s| s[0] > 0.0).count()
        };
        let mut info = StepInfo {
            cameras: cams.len(),
            coverage: covered as f64,
            pm_version: Some(self.pm.version()),
            lit_pixels: light.map(|_| lit),
            light_intensity: light.map(|l| l.intensity),
            ..StepInfo::default()
        };
        let reward = if cams.is_empty() {
            -1.0
        } else {
            let y = label(&self.scene, cams).expect("cameras placed");
            let pred = self.pm.model().predict(self.pm.params(), &self.features).expect("non-empty");
            let l1 = (pred - y).abs();
            info.l1 = Some(l1);
            let sample = Sample { features: self.features.clone(), label: y };
            match &mut self.pm {
                PmSlot::Online(t) => info.pm_loss = Some(t.observe(sample)),
                PmSlot::Frozen { pending, .. } => pending.push(sample),
            }
            depth_reward(l1, self.config.l_scale)
        };
        StepResult {
            state: encode_state(&self.state, &self.spec, &self.summaries, STEREO_OBS_DIM),
            reward,
            done: self.state.step_index >= self.spec.episode_len,
            info,
        }
    }

    fn rig(&self) -> &RigState {
        &self.state
    }

    fn score_rig(&mut self, rig: &RigState, seed: u64) -> f64 {
        let saved = self.scene;
        self.scene = sample_scene(seed);
        let feats: Vec<Vec<f64>> = rig
            .cameras
            .iter()
            .map(|c| self.pm.model().features(&self.observe(c, rig.light)))
            .collect();
        let y = label(&self.scene, &rig.cameras).ok();
        let r = stereo_reward(self.pm.model(), self.pm.params(), &feats, y, self.config.l_scale);
        self.scene = saved;
        r
    }
}

// ------------------------------------------------------------------- rig

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub mode: RigMode,
    pub roof: RoofConfig,
    pub traffic: TrafficConfig,
    /// Reward penalty per placed camera; defaults to 0.05 in mode `c` and
    /// 0 otherwise.
    pub penalty: Option<f64>,
    /// Traffic layout; defaults to forward-only in mode `c` and uniform
    /// otherwise.
    pub scenario: Option<Scenario>,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            mode: RigMode::B,
            roof: RoofConfig::default(),
            traffic: TrafficConfig::default(),
            penalty: None,
            scenario: None,
        }
    }
}

impl RigConfig {
    pub fn effective_penalty(&self) -> f64 {
        self.penalty.unwrap_or(if self.mode == RigMode::C { 0.05 } else { 0.0 })
    }

    pub fn effective_scenario(&self) -> Scenario {
        self.scenario.unwrap_or(if self.mode == RigMode::C {
            Scenario::ForwardOnly
        } else {
            Scenario::Uniform
        })
    }
}

#[derive(Debug, Clone)]
pub struct RigEnv {
    pub config: RigConfig,
    spec: ActionSpec,
    traffic: TrafficConfig,
    model: VisibilityModel,
    penalty: f64,
    scene: TrafficScene,
    cells: Vec<(f64, f64)>,
    state: RigState,
    summaries: Vec<Vec<f64>>,
}

impl RigEnv {
    pub fn new(config: RigConfig) -> Result<Self> {
        let spec = rig_action_spec(config.mode, &config.roof)?;
        let traffic = TrafficConfig {
            scenario: config.effective_scenario(),
            ..config.traffic.clone()
        };
        let model = VisibilityModel::new(&traffic, config.roof.height + MOUNT_HEIGHT_RANGE);
        let scene = sample_traffic(&traffic, 0);
        Ok(RigEnv {
            penalty: config.effective_penalty(),
            cells: vehicle_cells(&scene, &traffic),
            config,
            spec,
            traffic,
            model,
            scene,
            state: RigState::empty(),
            summaries: Vec::new(),
        })
    }

    pub fn visibility(&self) -> &VisibilityModel {
        &self.model
    }

    /// Per-camera fraction of vehicle cells seen, and the union fraction.
    fn seen(&self, cams: &[CameraConfig]) -> (Vec<f64>, f64) {
        if self.cells.is_empty() {
            return (vec![0.0; cams.len()], 0.0);
        }
        let mut per = vec![0usize; cams.len()];
        let mut union = 0;
        for &(x, y) in &self.cells {
            let mut any = false;
            for (k, c) in cams.iter().enumerate() {
                if self.model.sees(c, &self.scene, x, y) {
                    per[k] += 1;
                    any = true;
                }
            }
            union += any as usize;
        }
        let n = self.cells.len() as f64;
        (per.iter().map(|&p| p as f64 / n).collect(), union as f64 / n)
    }
}

impl Environment for RigEnv {
    fn spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn state_dim(&self) -> usize {
        self.spec.state_dim(1)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.scene = sample_traffic(&self.traffic, seed);
        self.cells = vehicle_cells(&self.scene, &self.traffic);
        self.state = RigState::empty();
        self.summaries.clear();
        encode_state(&self.state, &self.spec, &self.summaries, 1)
    }

    fn step(&mut self, action: &Action) -> StepResult {
        self.state = apply(&self.state, action, &self.spec);
        let (per, union) = self.seen(&self.state.cameras);
        self.summaries = per.into_iter().map(|p| vec![p]).collect();
        let n = self.state.cameras.len();
        let reward = (union - self.penalty * n as f64).clamp(-1.0, 1.0);
        StepResult {
            state: encode_state(&self.state, &self.spec, &self.summaries, 1),
            reward,
            done: self.state.step_index >= self.spec.episode_len,
            info: StepInfo {
                cameras: n,
                coverage: union,
                ..StepInfo::default()
            },
        }
    }

    fn rig(&self) -> &RigState {
        &self.state
    }

    fn score_rig(&mut self, rig: &RigState, seed: u64) -> f64 {
        let scene = sample_traffic(&self.traffic, seed);
        let cells = vehicle_cells(&scene, &self.traffic);
        rig_reward(&rig.cameras, &scene, &cells, &self.model, self.penalty)
    }
}

// ------------------------------------------------------------------- toy

/// Move a point from 0 toward a goal drawn uniformly from [-1, 1] in five
/// steps of at most 0.5; reward `1 - |position - goal|` every step.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    spec: ActionSpec,
    position: f64,
    goal: f64,
    t: usize,
    rig: RigState,
}

impl Default for ToyEnv {
    fn default() -> Self {
        ToyEnv {
            spec: ActionSpec {
                dims: vec![ActionDim::new(DimRole::X, -0.5, 0.5)],
                placement_index: 0,
                episode_len: 5,
                semantics: Semantics::Add,
                template: CameraConfig::default(),
            },
            position: 0.0,
            goal: 0.0,
            t: 0,
            rig: RigState::empty(),
        }
    }
}

impl ToyEnv {
    /// Expected episode reward of the optimal policy: every step closes
    /// 0.5 of the gap, so only the first step can fall short, by
    /// `E[max(0, |g| - 0.5)] = 1/8`.
    pub const OPTIMAL_MEAN_RETURN: f64 = 4.875;

    fn state(&self) -> Vec<f64> {
        vec![self.position, self.goal, self.t as f64 / self.spec.episode_len as f64]
    }
}

impl Environment for ToyEnv {
    fn spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        self.goal = rng.random_range(-1.0..=1.0);
        self.position = 0.0;
        self.t = 0;
        self.state()
    }

    fn step(&mut self, action: &Action) -> StepResult {
        self.position += action.values[0];
        self.t += 1;
        StepResult {
            state: self.state(),
            reward: (1.0 - (self.position - self.goal).abs()).clamp(-1.0, 1.0),
            done: self.t >= self.spec.episode_len,
            info: StepInfo::default(),
        }
    }

    fn rig(&self) -> &RigState {
        &self.rig
    }

    fn score_rig(&mut self, _rig: &RigState, _seed: u64) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::PerceptionConfig;

    fn place(x: f64, z: f64) -> Action {
        Action { values: vec![1.0, x, z, 0.0] }
    }

    fn skip() -> Action {
        Action { values: vec![0.0, 0.0, 75.0, 0.0] }
    }

    #[test]
    fn depth_reward_examples() {
        assert_eq!(depth_reward(0.0, 30.0), 1.0);
        assert_eq!(depth_reward(30.0, 30.0), -1.0);
        assert_eq!(depth_reward(90.0, 30.0), -1.0);
        assert_eq!(depth_reward(7.5, 30.0), 0.5);
    }

    #[test]
    fn empty_rig_is_penalized() {
        let pm = PmSlot::Online(PmTrainer::new(PerceptionConfig::default(), 0));
        let mut env = StereoEnv::new(StereoConfig::default(), pm);
        env.reset(3);
        let r = env.step(&skip());
        assert_eq!(r.reward, -1.0);
        assert_eq!(r.info.l1, None);
        assert!(!r.done);
    }

    #[test]
    fn reward_uses_perception_before_its_update() {
        let pm = PmSlot::Online(PmTrainer::new(PerceptionConfig::default(), 0));
        let mut env = StereoEnv::new(StereoConfig::default(), pm);
        env.reset(5);
        for (k, a) in [place(-10.0, 75.0), place(10.0, 72.0), skip()].iter().enumerate() {
            let snapshot = env.pm().params().to_vec();
            let version = env.pm().version();
            let r = env.step(a);
            assert_eq!(r.info.pm_version, Some(version));
            assert_eq!(env.pm().version(), version + 1, "step {k}");
            assert_ne!(env.pm().params(), &snapshot[..]);
            let expected = stereo_reward(env.pm().model(), &snapshot, &env.features, label(env.scene(), &env.rig().cameras).ok(), 30.0);
            assert_eq!(r.reward, expected);
        }
    }

    #[test]
    fn episodes_end_after_five_steps() {
        let pm = PmSlot::Online(PmTrainer::new(PerceptionConfig::default(), 0));
        let mut env = StereoEnv::new(StereoConfig::default(), pm);
        let s = env.reset(1);
        assert_eq!(s.len(), env.state_dim());
        let dones: Vec<bool> = (0..5).map(|_| env.step(&place(0.0, 75.0)).done).collect();
        assert_eq!(dones, vec![false, false, false, false, true]);
        assert_eq!(env.rig().cameras.len(), 5);
    }

    #[test]
    fn rig_env_rewards_coverage() {
        let mut env = RigEnv::new(RigConfig::default()).unwrap();
        let s = env.reset(2);
        assert_eq!(s.len(), env.state_dim());
        let spec = env.spec().clone();
        let mut last = 0.0;
        for k in 0..6 {
            let yaw = -180.0 + 60.0 * k as f64;
            let a = Action { values: vec![1.0, 0.0, 0.0, 1.94, yaw, 0.0, 120.0] };
            assert!(spec.contains(&a));
            let r = env.step(&a);
            assert!(r.reward >= last);
            last = r.reward;
        }
        assert!(last > 0.5, "{last}");
    }

    #[test]
    fn toy_optimum() {
        let mut env = ToyEnv::default();
        let mut total = 0.0;
        let n = 20_000;
        for seed in 0..n {
            env.reset(seed);
            for _ in 0..5 {
                let gap = env.goal - env.position;
                total += env.step(&Action { values: vec![gap.clamp(-0.5, 0.5)] }).reward;
            }
        }
        assert!((total / n as f64 - ToyEnv::OPTIMAL_MEAN_RETURN).abs() < 0.01);
    }
}
