//! Aggregates over test episodes, the baseline sweep, and their CSV forms.

use std::path::Path;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::config::EnvKind;
use super::trace::write_csv;
use crate::agent::train::seeds;
use crate::agent::{run_episode, Environment, Episode, Policy, StereoEnv};
use crate::error::Result;
use crate::perception::PerceptionModel;
use crate::search_space::{ActionSpec, CameraConfig, DimRole, RigMode, SpotLight};
use crate::sim_stereo::{label, render, sample_scene};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    pub fn bin(&self, v: f64) -> usize {
        let f = (v - self.lo) / (self.hi - self.lo);
        ((f * self.bins as f64).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / self.bins as f64)
            .collect()
    }
}

/// Raw placement counts per camera slot (the k-th camera of each rig).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmaps {
    pub x: Axis,
    pub y: Axis,
    /// Row-major `[iy * x.bins + ix]` counts, one grid per slot.
    pub slots: Vec<Vec<u64>>,
    /// Episodes whose rig has a camera in each slot; equals each grid's
    /// total.
    pub slot_episodes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageBucket {
    /// `0`, `1`, `2` or `3+`.
    pub coverage: String,
    pub steps: usize,
    pub mean_l1: Option<f64>,
}

/// Depth error bucketed by how many cameras see the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub buckets: Vec<CoverageBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCurves {
    /// Movable-camera positions.
    pub x: Vec<f64>,
    /// Mean L1 of the movable camera alone.
    pub one: Vec<f64>,
    /// Plus a fixed camera at the left edge.
    pub two: Vec<f64>,
    /// Plus another fixed camera at the center.
    pub three: Vec<f64>,
    pub scenes: usize,
}

impl BaselineCurves {
    pub fn grid_means(&self) -> [f64; 3] {
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        [m(&self.one), m(&self.two), m(&self.three)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSummary {
    pub episodes: usize,
    pub mean_final_intensity: f64,
    /// Episodes ending with intensity above 0.5.
    pub bright_fraction: f64,
    /// Episodes whose lit-pixel count never drops and ends above zero.
    pub monotone_lit_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRig {
    pub cameras: Vec<CameraConfig>,
    pub light: Option<SpotLight>,
    pub score: f64,
    pub episode_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub env: EnvKind,
    pub mode: Option<RigMode>,
    pub seed: u64,
    pub test_episodes: usize,
    pub deterministic: bool,
    pub mean_test_return: f64,
    /// Mean of the final step's coverage: cameras seeing the sphere
    /// (stereo) or fraction of vehicle cells seen (rig).
    pub mean_final_coverage: f64,
    /// Fraction of final rigs with 0, 1, ... cameras.
    pub camera_histogram: Vec<f64>,
    pub heatmaps: Option<Heatmaps>,
    pub coverage: Option<CoverageTable>,
    pub baseline: Option<BaselineCurves>,
    pub light: Option<LightSummary>,
    pub selected: Option<SelectedRig>,
}

/// Test episodes on the report seed stream.
pub fn test_episodes<E: Environment + ?Sized>(
    policy: &Policy,
    params: &[f64],
    env: &mut E,
    n: usize,
    seed: u64,
    deterministic: bool,
) -> Vec<Episode> {
    let mut rng = StdRng::seed_from_u64(seeds::derive(seed, seeds::SAMPLING, u64::MAX - 1));
    (0..n as u64)
        .map(|k| run_episode(policy, params, env, seeds::derive(seed, seeds::REPORT, k), &mut rng, deterministic))
        .collect()
}

/// Fractions of rigs with each camera count `0..=max_cameras`.
pub fn camera_histogram(episodes: &[Episode], max_cameras: usize) -> Vec<f64> {
    let mut h = vec![0.0; max_cameras + 1];
    for ep in episodes {
        h[ep.rig.cameras.len().min(max_cameras)] += 1.0;
    }
    let n = episodes.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Counts over the first two camera parameters of `spec`, or `None` when
/// it has fewer than two.
pub fn placement_heatmaps(episodes: &[Episode], spec: &ActionSpec, bins: [usize; 2]) -> Option<Heatmaps> {
    let dims: Vec<_> = spec.camera_dims().take(2).collect();
    if dims.len() < 2 {
        return None;
    }
    let axis = |i: usize| Axis {
        name: dims[i].name().to_string(),
        lo: dims[i].lo,
        hi: dims[i].hi,
        bins: bins[i],
    };
    let (x, y) = (axis(0), axis(1));
    let (rx, ry): (DimRole, DimRole) = (dims[0].role, dims[1].role);
    let slots_n = spec.slots();
    let mut slots = vec![vec![0u64; x.bins * y.bins]; slots_n];
    let mut slot_episodes = vec![0u64; slots_n];
    for ep in episodes {
        for (s, cam) in ep.rig.cameras.iter().enumerate().take(slots_n) {
            slots[s][y.bin(cam.get(ry)) * x.bins + x.bin(cam.get(rx))] += 1;
            slot_episodes[s] += 1;
        }
    }
    Some(Heatmaps { x, y, slots, slot_episodes })
}

pub fn coverage_bucket(coverage: f64) -> usize {
    (coverage.max(0.0) as usize).min(3)
}

/// Every step that has cameras contributes its (coverage, L1) pair, so
/// early low-coverage steps fill the lower buckets.
pub fn coverage_table(episodes: &[Episode]) -> CoverageTable {
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for info in episodes.iter().flat_map(|e| &e.infos) {
        if let Some(l1) = info.l1 {
            let b = coverage_bucket(info.coverage);
            sum[b] += l1;
            count[b] += 1;
        }
    }
    let names = ["0", "1", "2", "3+"];
    CoverageTable {
        buckets: (0..4)
            .map(|b| CoverageBucket {
                coverage: names[b].to_string(),
                steps: count[b],
                mean_l1: (count[b] > 0).then(|| sum[b] / count[b] as f64),
            })
            .collect(),
    }
}

/// Coverage table and camera-count histogram over `n` test episodes.
pub fn coverage_report(
    policy: &Policy,
    params: &[f64],
    env: &mut StereoEnv,
    n: usize,
    seed: u64,
    deterministic: bool,
) -> (CoverageTable, Vec<f64>) {
    let eps = test_episodes(policy, params, env, n, seed, deterministic);
    let slots = env.spec().slots();
    (coverage_table(&eps), camera_histogram(&eps, slots))
}

pub fn light_summary(episodes: &[Episode]) -> LightSummary {
    let n = episodes.len().max(1) as f64;
    let mut intensity = 0.0;
    let (mut bright, mut monotone) = (0.0, 0.0);
    for ep in episodes {
        let last = ep.infos.last().and_then(|i| i.light_intensity).unwrap_or(0.0);
        intensity += last;
        if last > 0.5 {
            bright += 1.0;
        }
        let lit: Vec<usize> = ep.infos.iter().map(|i| i.lit_pixels.unwrap_or(0)).collect();
        if lit.windows(2).all(|w| w[1] >= w[0]) && lit.last().is_some_and(|&l| l > 0) {
            monotone += 1.0;
        }
    }
    LightSummary {
        episodes: episodes.len(),
        mean_final_intensity: intensity / n,
        bright_fraction: bright / n,
        monotone_lit_fraction: monotone / n,
    }
}

/// Middle of the sphere placement region, (x, z).
const REGION_CENTER: (f64, f64) = (0.0, 30.5);

/// A camera at `(x, z)` turned toward the middle of the sphere region.
pub fn aimed_camera(x: f64, z: f64) -> CameraConfig {
    let (cx, cz) = REGION_CENTER;
    CameraConfig {
        x,
        z,
        yaw: (cx - x).atan2(z - cz).to_degrees(),
        ..CameraConfig::default()
    }
}

/// Mean L1 of the perception model for 1-, 2- and 3-camera systems as
/// the movable camera sweeps `x` over [-15, 15]. The fixed cameras sit at
/// `x = -15` and `x = 0`.
pub fn baseline_sweep(
    model: &PerceptionModel,
    params: &[f64],
    n_scenes: usize,
    points: usize,
    z: f64,
    seed: u64,
) -> Result<BaselineCurves> {
    let xs: Vec<f64> = (0..points)
        .map(|i| if points == 1 { 0.0 } else { -15.0 + 30.0 * i as f64 / (points - 1) as f64 })
        .collect();
    let fixed = [aimed_camera(-15.0, z), aimed_camera(0.0, z)];
    let mut sums = vec![[0.0; 3]; points];
    for k in 0..n_scenes as u64 {
        let scene = sample_scene(seeds::derive(seed, seeds::BASELINE, k));
        let fixed_feats: Vec<Vec<f64>> = fixed.iter().map(|c| model.features(&render(&scene, c, None))).collect();
        for (i, &x) in xs.iter().enumerate() {
            let moving = aimed_camera(x, z);
            let mut cams = vec![moving];
            let mut feats = vec![model.features(&render(&scene, &moving, None))];
            for s in 0..3 {
                if s > 0 {
                    cams.push(fixed[s - 1]);
                    feats.push(fixed_feats[s - 1].clone());
                }
                let y = label(&scene, &cams)?;
                sums[i][s] += (model.predict(params, &feats)? - y).abs();
            }
        }
    }
    let n = n_scenes.max(1) as f64;
    Ok(BaselineCurves {
        one: sums.iter().map(|s| s[0] / n).collect(),
        two: sums.iter().map(|s| s[1] / n).collect(),
        three: sums.iter().map(|s| s[2] / n).collect(),
        x: xs,
        scenes: n_scenes,
    })
}

#[derive(Serialize)]
struct HistogramRow {
    cameras: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct HeatmapRow {
    slot: usize,
    ix: usize,
    iy: usize,
    count: u64,
}

#[derive(Serialize)]
struct BaselineRow {
    x: f64,
    one: f64,
    two: f64,
    three: f64,
}

/// Writes the report's tables as `histogram.csv`, `heatmap.csv`,
/// `coverage.csv` and `baseline.csv` (the last three when present).
pub fn write_tables(dir: &Path, report: &MetricsReport) -> Result<()> {
    let hist: Vec<HistogramRow> = report
        .camera_histogram
        .iter()
        .enumerate()
        .map(|(cameras, &fraction)| HistogramRow { cameras, fraction })
        .collect();
    write_csv(&dir.join("histogram.csv"), "histogram", REPORT_VERSION, &hist)?;
    if let Some(h) = &report.heatmaps {
        let mut rows = Vec::new();
        for (slot, grid) in h.slots.iter().enumerate() {
            for iy in 0..h.y.bins {
                for ix in 0..h.x.bins {
                    rows.push(HeatmapRow { slot, ix, iy, count: grid[iy * h.x.bins + ix] });
                }
            }
        }
        write_csv(&dir.join("heatmap.csv"), "heatmap", REPORT_VERSION, &rows)?;
    }
    if let Some(c) = &report.coverage {
        write_csv(&dir.join("coverage.csv"), "coverage", REPORT_VERSION, &c.buckets)?;
    }
    if let Some(b) = &report.baseline {
        let rows: Vec<BaselineRow> = (0..b.x.len())
            .map(|i| BaselineRow { x: b.x[i], one: b.one[i], two: b.two[i], three: b.three[i] })
            .collect();
        write_csv(&dir.join("baseline.csv"), "baseline", REPORT_VERSION, &rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{StepInfo, Trajectory};
    use crate::search_space::{stereo_action_spec, RigState};

    fn episode(cams: &[(f64, f64)], steps: &[(f64, Option<f64>)]) -> Episode {
        Episode {
            rig: RigState {
                cameras: cams.iter().map(|&(x, z)| CameraConfig { x, z, ..Default::default() }).collect(),
                step_index: 5,
                light: None,
            },
            rewards: vec![0.0; steps.len()],
            infos: steps
                .iter()
                .map(|&(coverage, l1)| StepInfo { coverage, l1, ..Default::default() })
                .collect(),
            trajectory: Trajectory::default(),
        }
    }

    #[test]
    fn histogram_sums_to_one() {
        let eps = vec![episode(&[], &[]), episode(&[(0.0, 70.0)], &[]), episode(&[(0.0, 70.0); 2], &[])];
        let h = camera_histogram(&eps, 5);
        assert_eq!(h.len(), 6);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((h[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn heatmap_totals_match_slot_counts() {
        let spec = stereo_action_spec(false);
        let eps = vec![
            episode(&[(-15.0, 69.0), (15.0, 80.0)], &[]),
            episode(&[(0.1, 74.6)], &[]),
        ];
        let h = placement_heatmaps(&eps, &spec, [30, 11]).unwrap();
        assert_eq!((h.x.name.as_str(), h.y.name.as_str()), ("x", "z"));
        assert_eq!(h.slot_episodes[..2], [2, 1]);
        for (grid, n) in h.slots.iter().zip(&h.slot_episodes) {
            assert_eq!(grid.iter().sum::<u64>(), *n);
        }
        // Corners land in the corner bins.
        assert_eq!(h.slots[0][0], 1);
        assert_eq!(h.slots[1][30 * 11 - 1], 1);
        assert_eq!(h.slots[0][5 * 30 + 15], 1);
    }

    #[test]
    fn coverage_buckets_are_exhaustive() {
        let eps = vec![
            episode(&[], &[(0.0, None), (0.0, Some(10.0)), (1.0, Some(6.0))]),
            episode(&[], &[(2.0, Some(4.0)), (4.0, Some(2.0)), (3.0, Some(1.0))]),
        ];
        let t = coverage_table(&eps);
        let steps: Vec<usize> = t.buckets.iter().map(|b| b.steps).collect();
        assert_eq!(steps, vec![1, 1, 1, 2]);
        assert_eq!(t.buckets[3].mean_l1, Some(1.5));
        assert_eq!(steps.iter().sum::<usize>(), 5);
    }

    #[test]
    fn aimed_camera_points_at_the_region() {
        let c = aimed_camera(-15.0, 75.0);
        let (fwd, _, _) = crate::sim_stereo::camera_basis(&c);
        let (dx, dz) = (0.0 - -15.0, 30.5 - 75.0);
        let n = f64::hypot(dx, dz);
        assert!((fwd[0] - dx / n).abs() < 1e-12 && (fwd[2] - dz / n).abs() < 1e-12);
    }
}
