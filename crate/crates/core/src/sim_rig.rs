//! Top-down traffic scenes around an ego vehicle and an analytic
//! camera-visibility model scored on a bird's-eye-view grid.
//!
//! World frame: `x` forward, `y` left, `z` up, meters; the ego vehicle is
//! centered at the origin. Camera yaw is measured from `+x` toward `+y`,
//! pitch is positive above the horizon.

use std::fmt::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::CameraConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Uniform,
    /// Every vehicle center lies ahead of the ego vehicle.
    ForwardOnly,
}

impl Scenario {
    pub fn tag(&self) -> &'static str {
        match self {
            Scenario::Uniform => "uniform",
            Scenario::ForwardOnly => "forward_only",
        }
    }
}

/// Axis-aligned vehicle box on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub x: f64,
    pub y: f64,
    /// Extent along `y`.
    pub width: f64,
    /// Extent along `x`.
    pub length: f64,
    pub height: f64,
}

impl Vehicle {
    fn bounds(&self) -> [f64; 4] {
        [
            self.x - self.length / 2.0,
            self.x + self.length / 2.0,
            self.y - self.width / 2.0,
            self.y + self.width / 2.0,
        ]
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        let [x0, x1, y0, y1] = self.bounds();
        px >= x0 && px <= x1 && py >= y0 && py <= y1
    }

    fn overlaps(&self, other: &Vehicle, margin: f64) -> bool {
        let [a0, a1, b0, b1] = self.bounds();
        let [c0, c1, d0, d1] = other.bounds();
        a0 < c1 + margin && c0 < a1 + margin && b0 < d1 + margin && d0 < b1 + margin
    }

    /// Entry and exit distances of the ray `o + t d` (slab test).
    fn ray_interval(&self, o: [f64; 2], d: [f64; 2]) -> Option<(f64, f64)> {
        let [x0, x1, y0, y1] = self.bounds();
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (oi, di, lo, hi) in [(o[0], d[0], x0, x1), (o[1], d[1], y0, y1)] {
            if di.abs() < 1e-12 {
                if oi < lo || oi > hi {
                    return None;
                }
            } else {
                let (a, b) = ((lo - oi) / di, (hi - oi) / di);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1 && t1 > 0.0).then_some((t0.max(0.0), t1))
    }
}

/// Scene generation and visibility parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub scenario: Scenario,
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    /// Side of the square BEV extent centered on the ego vehicle.
    pub extent: f64,
    pub cell_size: f64,
    /// Maximum camera range at the top mount height with a level pitch.
    pub max_range: f64,
    pub vehicle_width: f64,
    pub vehicle_length: f64,
    pub vehicle_height: f64,
    /// Footprint of the ego vehicle that traffic may not overlap.
    pub ego_length: f64,
    pub ego_width: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            scenario: Scenario::Uniform,
            min_vehicles: 3,
            max_vehicles: 12,
            extent: 100.0,
            cell_size: 0.5,
            max_range: 50.0,
            vehicle_width: 2.0,
            vehicle_length: 4.5,
            vehicle_height: 1.5,
            ego_length: 4.7,
            ego_width: 1.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficScene {
    pub vehicles: Vec<Vehicle>,
    pub scenario: Scenario,
    pub seed: u64,
}

pub fn sample_traffic(config: &TrafficConfig, seed: u64) -> TrafficScene {
    let mut rng = StdRng::seed_from_u64(seed);
    let count = rng.random_range(config.min_vehicles..=config.max_vehicles);
    let ego = Vehicle {
        x: 0.0,
        y: 0.0,
        width: config.ego_width,
        length: config.ego_length,
        height: 0.0,
    };
    let half = config.extent / 2.0;
    let (hl, hw) = (config.vehicle_length / 2.0, config.vehicle_width / 2.0);
    let x_lo = match config.scenario {
        Scenario::Uniform => -half + hl,
        Scenario::ForwardOnly => 0.0,
    };
    let mut vehicles: Vec<Vehicle> = Vec::with_capacity(count);
    let mut attempts = 0;
    while vehicles.len() < count && attempts < 10_000 {
        attempts += 1;
        let v = Vehicle {
            x: rng.random_range(x_lo..half - hl),
            y: rng.random_range(-half + hw..half - hw),
            width: config.vehicle_width,
            length: config.vehicle_length,
            height: config.vehicle_height,
        };
        if config.scenario == Scenario::ForwardOnly && v.x <= 0.0 {
            continue;
        }
        if v.overlaps(&ego, 0.5) || vehicles.iter().any(|o| v.overlaps(o, 0.0)) {
            continue;
        }
        vehicles.push(v);
    }
    TrafficScene {
        vehicles,
        scenario: config.scenario,
        seed,
    }
}

/// Occupancy and visibility on a square grid; row `i` spans `y`, column
/// `j` spans `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub size: usize,
    pub cell_size: f64,
    pub occupancy: Vec<bool>,
    pub visibility: Vec<bool>,
}

impl BevGrid {
    /// World coordinates of a cell center.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let half = self.size as f64 * self.cell_size / 2.0;
        (
            -half + (j as f64 + 0.5) * self.cell_size,
            -half + (i as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn seen_occupied_count(&self) -> usize {
        self.occupancy
            .iter()
            .zip(&self.visibility)
            .filter(|(o, v)| **o && **v)
            .count()
    }
}

/// Visibility model shared by the grid and reward evaluations.
#[derive(Debug, Clone)]
pub struct VisibilityModel {
    pub max_range: f64,
    /// Mount height at which the full range is reached.
    pub top_height: f64,
}

impl VisibilityModel {
    pub fn new(config: &TrafficConfig, top_height: f64) -> Self {
        VisibilityModel {
            max_range: config.max_range,
            top_height,
        }
    }

    /// Range grows linearly with mount height and shrinks with the cosine
    /// of any upward pitch.
    pub fn range(&self, cam: &CameraConfig) -> f64 {
        let pitch = cam.pitch.max(0.0).min(90.0).to_radians();
        self.max_range * (cam.z / self.top_height).max(0.0) * pitch.cos()
    }

    /// Is the ground point `(px, py)` seen by `cam`?
    pub fn sees(&self, cam: &CameraConfig, scene: &TrafficScene, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - cam.x, py - cam.y);
        let dist = dx.hypot(dy);
        if dist > self.range(cam) {
            return false;
        }
        if dist > 1e-9 {
            let bearing = dy.atan2(dx).to_degrees();
            let off = (bearing - cam.yaw + 540.0).rem_euclid(360.0) - 180.0;
            if off.abs() > cam.fov / 2.0 {
                return false;
            }
        }
        !self.occluded(cam, scene, px, py, dist)
    }

    /// A vehicle between camera and target blocks the line of sight unless
    /// the camera looks down over its far edge: the shadow it casts on the
    /// ground ends at `t_out * h_cam / (h_cam - h_vehicle)`.
    fn occluded(&self, cam: &CameraConfig, scene: &TrafficScene, px: f64, py: f64, dist: f64) -> bool {
        if dist <= 1e-9 {
            return false;
        }
        let d = [(px - cam.x) / dist, (py - cam.y) / dist];
        scene.vehicles.iter().any(|v| {
            if v.contains(px, py) {
                return false;
            }
            let Some((t_in, t_out)) = v.ray_interval([cam.x, cam.y], d) else {
                return false;
            };
            if t_in >= dist {
                return false;
            }
            cam.z <= v.height || dist <= t_out * cam.z / (cam.z - v.height)
        })
    }
}

fn grid_size(config: &TrafficConfig) -> usize {
    (config.extent / config.cell_size).round() as usize
}

fn occupancy(config: &TrafficConfig, scene: &TrafficScene) -> BevGrid {
    let n = grid_size(config);
    let mut g = BevGrid {
        size: n,
        cell_size: config.cell_size,
        occupancy: vec![false; n * n],
        visibility: vec![false; n * n],
    };
    for i in 0..n {
        for j in 0..n {
            let (x, y) = g.center(i, j);
            g.occupancy[i * n + j] = scene.vehicles.iter().any(|v| v.contains(x, y));
        }
    }
    g
}

/// Full BEV evaluation: every cell seen by at least one camera.
pub fn visible_cells(cams: &[CameraConfig], scene: &TrafficScene, config: &TrafficConfig, model: &VisibilityModel) -> BevGrid {
    let mut g = occupancy(config, scene);
    let n = g.size;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = g.center(i, j);
            g.visibility[i * n + j] = cams.iter().any(|c| model.sees(c, scene, x, y));
        }
    }
    g
}

/// Cell centers covered by vehicles.
pub fn vehicle_cells(scene: &TrafficScene, config: &TrafficConfig) -> Vec<(f64, f64)> {
    let n = grid_size(config);
    let half = n as f64 * config.cell_size / 2.0;
    let idx = |v: f64| ((v + half) / config.cell_size - 0.5).clamp(0.0, (n - 1) as f64);
    let mut cells = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for v in &scene.vehicles {
        let [x0, x1, y0, y1] = v.bounds();
        let (j0, j1) = (idx(x0).floor() as usize, idx(x1).ceil() as usize);
        let (i0, i1) = (idx(y0).floor() as usize, idx(y1).ceil() as usize);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let c = (-half + (j as f64 + 0.5) * config.cell_size, -half + (i as f64 + 0.5) * config.cell_size);
                if v.contains(c.0, c.1) && seen.insert((i, j)) {
                    cells.push(c);
                }
            }
        }
    }
    cells
}

/// Fraction of vehicle cells seen by at least one camera.
pub fn coverage_fraction(cams: &[CameraConfig], scene: &TrafficScene, cells: &[(f64, f64)], model: &VisibilityModel) -> f64 {
    if cells.is_empty() || cams.is_empty() {
        return 0.0;
    }
    let seen = cells
        .iter()
        .filter(|&&(x, y)| cams.iter().any(|c| model.sees(c, scene, x, y)))
        .count();
    seen as f64 / cells.len() as f64
}

/// Vehicle-cell recall minus a per-camera penalty, clipped to [-1, 1].
pub fn rig_reward(cams: &[CameraConfig], scene: &TrafficScene, cells: &[(f64, f64)], model: &VisibilityModel, penalty_per_camera: f64) -> f64 {
    let r = coverage_fraction(cams, scene, cells, model) - penalty_per_camera * cams.len() as f64;
    r.clamp(-1.0, 1.0)
}

/// Camera list text format: a header comment, then one camera per line.
pub fn rig_to_text(cams: &[CameraConfig]) -> String {
    let mut out = String::from("# x y z yaw pitch fov\n");
    for c in cams {
        let _ = writeln!(out, "{} {} {} {} {} {}", c.x, c.y, c.z, c.yaw, c.pitch, c.fov);
    }
    out
}

pub fn rig_from_text(text: &str) -> Result<Vec<CameraConfig>> {
    let mut cams = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse { line: n + 1, column: 1, message: format!("bad number in {line:?}") })?;
        if vals.len() != 6 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: n + 1, column: 1, message: "expected 6 finite values".into() });
        }
        cams.push(CameraConfig {
            x: vals[0],
            y: vals[1],
            z: vals[2],
            yaw: vals[3],
            pitch: vals[4],
            fov: vals[5],
            ..CameraConfig::default()
        });
    }
    Ok(cams)
}

pub fn write_rig(path: &Path, cams: &[CameraConfig]) -> Result<()> {
    std::fs::write(path, rig_to_text(cams))?;
    Ok(())
}

pub fn read_rig(path: &Path) -> Result<Vec<CameraConfig>> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    rig_from_text(&text)
}
