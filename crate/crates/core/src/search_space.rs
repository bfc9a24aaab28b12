//! The bounded action and state spaces the camera designer searches.
//!
//! Each step the agent emits one value per [`ActionDim`]. The placement
//! probability `p` adds (or, under [`Semantics::Replace`], replaces) a
//! camera when it exceeds 0.5; the remaining camera dims parameterize that
//! camera. Illumination dims, when present, are applied every step.
//!
//! Coordinates differ per environment. The stereo scene is a top-down
//! `(x, z)` plane with cameras looking toward `-z` at zero yaw. The rig
//! world uses vehicle coordinates: `x` forward, `y` left, `z` up.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEMENT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimRole {
    Place,
    X,
    Y,
    Z,
    Yaw,
    Pitch,
    Fov,
    LightAngle,
    LightIntensity,
}

impl DimRole {
    pub fn name(&self) -> &'static str {
        match self {
            DimRole::Place => "p",
            DimRole::X => "x",
            DimRole::Y => "y",
            DimRole::Z => "z",
            DimRole::Yaw => "yaw",
            DimRole::Pitch => "pitch",
            DimRole::Fov => "fov",
            DimRole::LightAngle => "light_angle",
            DimRole::LightIntensity => "light_intensity",
        }
    }

    fn is_camera_param(&self) -> bool {
        !matches!(self, DimRole::Place | DimRole::LightAngle | DimRole::LightIntensity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimKind {
    Continuous,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionDim {
    pub role: DimRole,
    pub lo: f64,
    pub hi: f64,
    pub kind: DimKind,
}

impl ActionDim {
    pub fn new(role: DimRole, lo: f64, hi: f64) -> Self {
        let kind = if role == DimRole::Place {
            DimKind::Probability
        } else {
            DimKind::Continuous
        };
        ActionDim { role, lo, hi, kind }
    }

    pub fn name(&self) -> &'static str {
        self.role.name()
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Semantics {
    /// A placed camera is appended to the rig.
    Add,
    /// A placed camera replaces the previous one.
    Replace,
}

/// A camera pose plus intrinsics. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub fov: f64,
    pub resolution: (u32, u32),
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
            fov: 45.0,
            resolution: (128, 128),
        }
    }
}

impl CameraConfig {
    pub fn get(&self, role: DimRole) -> f64 {
        match role {
            DimRole::X => self.x,
            DimRole::Y => self.y,
            DimRole::Z => self.z,
            DimRole::Yaw => self.yaw,
            DimRole::Pitch => self.pitch,
            DimRole::Fov => self.fov,
            _ => f64::NAN,
        }
    }

    fn set(&mut self, role: DimRole, v: f64) {
        match role {
            DimRole::X => self.x = v,
            DimRole::Y => self.y = v,
            DimRole::Z => self.z = v,
            DimRole::Yaw => self.yaw = v,
            DimRole::Pitch => self.pitch = v,
            DimRole::Fov => self.fov = v,
            _ => {}
        }
    }
}

/// A steerable spot light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotLight {
    pub angle: f64,
    /// In [0, 1].
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub dims: Vec<ActionDim>,
    pub placement_index: usize,
    /// Maximum number of steps per episode.
    pub episode_len: usize,
    pub semantics: Semantics,
    /// Values for camera parameters that are not action dims.
    pub template: CameraConfig,
}

/// Extents of the ego-vehicle roof, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoofConfig {
    pub length: f64,
    pub width: f64,
    /// Height of the roof above ground.
    pub height: f64,
}

impl Default for RoofConfig {
    fn default() -> Self {
        RoofConfig {
            length: 1.75,
            width: 1.0,
            height: 1.44,
        }
    }
}

/// Camera mounts may sit up to this far above the roof.
pub const MOUNT_HEIGHT_RANGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigMode {
    /// One front camera; height, pitch, FoV; placements replace.
    A,
    /// Up to six cameras anywhere on the roof.
    B,
    /// As `B`, with a per-camera penalty and forward-only traffic.
    C,
}

impl RigMode {
    pub fn tag(&self) -> &'static str {
        match self {
            RigMode::A => "a",
            RigMode::B => "b",
            RigMode::C => "c",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "a" | "A" => Some(RigMode::A),
            "b" | "B" => Some(RigMode::B),
            "c" | "C" => Some(RigMode::C),
            _ => None,
        }
    }
}

/// Stereo depth action space: `(p, x, z, yaw)`, five cameras, 45° FoV,
/// optionally extended with a spot light's angle and intensity.
pub fn stereo_action_spec(illumination: bool) -> ActionSpec {
    let mut dims = vec![
        ActionDim::new(DimRole::Place, 0.0, 1.0),
        ActionDim::new(DimRole::X, -15.0, 15.0),
        ActionDim::new(DimRole::Z, 69.0, 80.0),
        ActionDim::new(DimRole::Yaw, -60.0, 60.0),
    ];
    if illumination {
        dims.push(ActionDim::new(DimRole::LightAngle, -60.0, 60.0));
        dims.push(ActionDim::new(DimRole::LightIntensity, 0.0, 1.0));
    }
    ActionSpec {
        dims,
        placement_index: 0,
        episode_len: 5,
        semantics: Semantics::Add,
        template: CameraConfig::default(),
    }
}

/// Vehicle rig action space.
pub fn rig_action_spec(mode: RigMode, roof: &RoofConfig) -> Result<ActionSpec> {
    let ok = |v: f64| v.is_finite() && v > 0.0;
    if !(ok(roof.length) && ok(roof.width) && ok(roof.height)) {
        return Err(Error::Config(format!("degenerate roof extents {roof:?}")));
    }
    let z = ActionDim::new(DimRole::Z, roof.height, roof.height + MOUNT_HEIGHT_RANGE);
    let pitch = ActionDim::new(DimRole::Pitch, -20.0, 20.0);
    let fov = ActionDim::new(DimRole::Fov, 50.0, 120.0);
    let place = ActionDim::new(DimRole::Place, 0.0, 1.0);
    let template = CameraConfig {
        x: roof.length / 2.0,
        y: 0.0,
        z: roof.height,
        ..CameraConfig::default()
    };
    let (dims, semantics) = match mode {
        RigMode::A => (vec![place, z, pitch, fov], Semantics::Replace),
        RigMode::B | RigMode::C => (
            vec![
                place,
                ActionDim::new(DimRole::X, -roof.length / 2.0, roof.length / 2.0),
                ActionDim::new(DimRole::Y, -roof.width / 2.0, roof.width / 2.0),
                z,
                ActionDim::new(DimRole::Yaw, -180.0, 180.0),
                pitch,
                fov,
            ],
            Semantics::Add,
        ),
    };
    Ok(ActionSpec {
        dims,
        placement_index: 0,
        episode_len: 6,
        semantics,
        template,
    })
}

/// One action: a value per dim of its spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub values: Vec<f64>,
}

/// A rig under construction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RigState {
    pub cameras: Vec<CameraConfig>,
    pub step_index: usize,
    pub light: Option<SpotLight>,
}

impl RigState {
    pub fn empty() -> Self {
        Self::default()
    }
}

impl ActionSpec {
    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    pub fn index_of(&self, role: DimRole) -> Option<usize> {
        self.dims.iter().position(|d| d.role == role)
    }

    pub fn has_light(&self) -> bool {
        self.index_of(DimRole::LightIntensity).is_some()
    }

    /// Dims that parameterize a camera, in spec order.
    pub fn camera_dims(&self) -> impl Iterator<Item = &ActionDim> {
        self.dims.iter().filter(|d| d.role.is_camera_param())
    }

    /// Number of camera slots in the state encoding.
    pub fn slots(&self) -> usize {
        match self.semantics {
            Semantics::Add => self.episode_len,
            Semantics::Replace => 1,
        }
    }

    /// Maps unbounded policy outputs into the box via `tanh`.
    pub fn squash(&self, raw: &[f64]) -> Action {
        debug_assert_eq!(raw.len(), self.dims.len());
        let values = self
            .dims
            .iter()
            .zip(raw)
            .map(|(d, r)| d.lo + (d.hi - d.lo) * 0.5 * (r.tanh() + 1.0))
            .collect();
        Action { values }
    }

    /// Projects an action into the box; identity on in-bounds actions.
    pub fn clamp(&self, action: &Action) -> Action {
        let values = self
            .dims
            .iter()
            .zip(&action.values)
            .map(|(d, v)| v.clamp(d.lo, d.hi))
            .collect();
        Action { values }
    }

    pub fn contains(&self, action: &Action) -> bool {
        action.values.len() == self.dims.len()
            && self
                .dims
                .iter()
                .zip(&action.values)
                .all(|(d, v)| *v >= d.lo && *v <= d.hi)
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Action {
        Action {
            values: self.dims.iter().map(|d| rng.random_range(d.lo..=d.hi)).collect(),
        }
    }

    /// The camera an action would place.
    pub fn camera_from(&self, action: &Action) -> CameraConfig {
        let mut cam = self.template;
        for (d, v) in self.dims.iter().zip(&action.values) {
            cam.set(d.role, *v);
        }
        cam
    }

    pub fn places_camera(&self, action: &Action) -> bool {
        action.values[self.placement_index] > PLACEMENT_THRESHOLD
    }

    /// Checks a camera's action-dim parameters against the bounds.
    pub fn camera_in_bounds(&self, cam: &CameraConfig) -> bool {
        self.camera_dims().all(|d| {
            let v = cam.get(d.role);
            v >= d.lo && v <= d.hi
        })
    }

    /// Length of [`encode_state`] output for per-camera observation
    /// summaries of `obs_dim` values.
    pub fn state_dim(&self, obs_dim: usize) -> usize {
        let per_slot = 1 + self.camera_dims().count() + obs_dim;
        let light = if self.has_light() { 2 } else { 0 };
        self.slots() * per_slot + light + 1
    }
}

/// Advances the rig by one action.
pub fn apply(state: &RigState, action: &Action, spec: &ActionSpec) -> RigState {
    debug_assert!(state.step_index < spec.episode_len);
    let mut next = state.clone();
    next.step_index += 1;
    if spec.places_camera(action) {
        let cam = spec.camera_from(action);
        match spec.semantics {
            Semantics::Add => next.cameras.push(cam),
            Semantics::Replace => next.cameras = vec![cam],
        }
    }
    if let (Some(ai), Some(ii)) = (
        spec.index_of(DimRole::LightAngle),
        spec.index_of(DimRole::LightIntensity),
    ) {
        next.light = Some(SpotLight {
            angle: action.values[ai],
            intensity: action.values[ii],
        });
    }
    next
}

/// Fixed-length state vector: per slot `(placed, normalized camera params,
/// observation summary)`, zero-padded, then the light (if any) and the
/// fraction of the episode elapsed.
pub fn encode_state(state: &RigState, spec: &ActionSpec, obs: &[Vec<f64>], obs_dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.state_dim(obs_dim));
    let cam_dims: Vec<&ActionDim> = spec.camera_dims().collect();
    for slot in 0..spec.slots() {
        match state.cameras.get(slot) {
            Some(cam) => {
                out.push(1.0);
                out.extend(cam_dims.iter().map(|d| d.normalize(cam.get(d.role))));
                match obs.get(slot) {
                    Some(o) => {
                        debug_assert_eq!(o.len(), obs_dim);
                        out.extend(o.iter().copied());
                    }
                    None => out.extend(std::iter::repeat_n(0.0, obs_dim)),
                }
            }
            None => out.extend(std::iter::repeat_n(0.0, 1 + cam_dims.len() + obs_dim)),
        }
    }
    if spec.has_light() {
        let angle = spec.dims[spec.index_of(DimRole::LightAngle).unwrap()];
        match state.light {
            Some(l) => {
                out.push(angle.normalize(l.angle));
                out.push(l.intensity);
            }
            None => out.extend([0.0, 0.0]),
        }
    }
    out.push(state.step_index as f64 / spec.episode_len as f64);
    out
}
