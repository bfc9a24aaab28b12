use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{ProtocolConfig, RigConfig, StereoConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::perception::PerceptionConfig;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "DISER_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    /// Two-view sphere depth with a co-trained perception model.
    #[default]
    Stereo,
    /// Roof camera rig scored by BEV vehicle visibility.
    Rig,
    /// One-dimensional target reaching; a PPO sanity task.
    Toy,
}

impl EnvKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EnvKind::Stereo => "stereo",
            EnvKind::Rig => "rig",
            EnvKind::Toy => "toy",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "stereo" => Some(EnvKind::Stereo),
            "rig" => Some(EnvKind::Rig),
            "toy" => Some(EnvKind::Toy),
            _ => None,
        }
    }
}

/// Evaluation settings for the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Test episodes behind the histogram, heatmaps and coverage table.
    pub test_episodes: usize,
    /// Use the policy mean instead of sampling in test episodes. Defaults
    /// to deterministic for the toy task and sampled otherwise.
    pub deterministic: Option<bool>,
    /// Bins along the first two camera parameters of the action space.
    pub heatmap_bins: [usize; 2],
    /// Movable-camera positions in the baseline sweep.
    pub baseline_points: usize,
    pub baseline_scenes: usize,
    /// Height of every camera in the baseline sweep.
    pub baseline_z: f64,
    /// Deterministic episodes for the illumination summary.
    pub light_episodes: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            test_episodes: 1000,
            deterministic: None,
            heatmap_bins: [30, 11],
            baseline_points: 31,
            baseline_scenes: 1000,
            baseline_z: 75.0,
            light_episodes: 200,
        }
    }
}

/// Everything a run needs. Every key has a default; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    pub perception: PerceptionConfig,
    pub stereo: StereoConfig,
    pub rig: RigConfig,
    pub protocol: ProtocolConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.train.workers == 0 {
            return bad("train.workers must be at least 1");
        }
        if self.train.ppo.rollout_steps == 0 || self.train.ppo.minibatch == 0 {
            return bad("train.ppo.rollout_steps and minibatch must be positive");
        }
        if self.report.heatmap_bins.contains(&0) {
            return bad("report.heatmap_bins must be positive");
        }
        if self.perception.batch == 0 || self.perception.capacity == 0 {
            return bad("perception.batch and capacity must be positive");
        }
        if self.protocol.n_test == 0 || self.protocol.top_k == 0 || self.protocol.n_reval == 0 {
            return bad("protocol counts must be positive");
        }
        Ok(())
    }

    /// `explicit` (a command-line flag) wins, then the environment
    /// override, then the config, then `runs/<env>-<seed>`.
    pub fn resolve_out(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV) {
            return PathBuf::from(p);
        }
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", self.env.tag(), self.seed)))
    }

    pub fn deterministic_tests(&self) -> bool {
        self.report.deterministic.unwrap_or(self.env == EnvKind::Toy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::RigMode;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("env = \"rig\"\nseed = 3\n[rig]\nmode = \"c\"\n[train.ppo]\nlr = 0.001\n").unwrap();
        assert_eq!(cfg.env, EnvKind::Rig);
        assert_eq!(cfg.rig.mode, RigMode::C);
        assert_eq!(cfg.train.ppo.lr, 0.001);
        assert_eq!(cfg.train.ppo.clip, 0.2);
        assert_eq!(cfg.report.heatmap_bins, [30, 11]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 1\n"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[train.ppo]\nclip_eps = 0.1\n").is_err());
        assert!(RunConfig::from_toml("[stereo.light]\ncolour = 1\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[train]\nworkers = 0\n").is_err());
        assert!(RunConfig::from_toml("env = \"mono\"\n").is_err());
    }

    #[test]
    fn explicit_out_wins() {
        let cfg = RunConfig { out: Some("a".into()), ..Default::default() };
        assert_eq!(cfg.resolve_out(Some(Path::new("b"))), PathBuf::from("b"));
    }
}
