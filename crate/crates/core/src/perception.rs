//! The perception model: a set-pooled depth regressor over a variable
//! number of camera observations, its training buffer, and a classical
//! two-view triangulation baseline.

use std::collections::VecDeque;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, Optimizer, SgdMomentum, Tape};
use crate::sim_stereo::{half_fov_tan, Observation};

/// Pixels per side of the raw-pixel feature mode.
pub const RAW_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Heavy-ball SGD with `momentum`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Width of both encoder layers.
    pub hidden: usize,
    /// Width of the hidden layer between pooling and the scalar output.
    pub head_hidden: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    /// Perception buffer capacity.
    pub capacity: usize,
    /// Feed a 16x16 downsample of each image instead of silhouette stats.
    pub raw_pixels: bool,
    /// The network output is `depth_offset + depth_scale * y`.
    pub depth_offset: f64,
    pub depth_scale: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            hidden: 64,
            head_hidden: 64,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            momentum: 0.9,
            batch: 32,
            capacity: 4096,
            raw_pixels: false,
            depth_offset: 45.0,
            depth_scale: 30.0,
        }
    }
}

/// Compact per-camera summary of a silhouette observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFeature {
    /// Centroid, normalized so the image spans [-1, 1]; `v` points up.
    pub u: f64,
    pub v: f64,
    /// Fraction of pixels on the sphere.
    pub area: f64,
    /// 1 if any pixel sees the sphere.
    pub flag: f64,
    pub camera: [f64; 4],
}

impl CameraFeature {
    pub const DIM: usize = 8;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.u, self.v, self.area, self.flag];
        v.extend_from_slice(&self.camera);
        v
    }
}

/// Camera parameters scaled to roughly unit range over the stereo
/// placement region.
fn camera_params(obs: &Observation) -> [f64; 4] {
    let c = &obs.camera;
    [c.x / 15.0, (c.z - 74.5) / 5.5, c.yaw / 60.0, c.fov / 90.0 - 0.5]
}

pub fn featurize(obs: &Observation) -> CameraFeature {
    let img = &obs.image;
    let (h, w) = (img.height as f64, img.width as f64);
    let (mut n, mut su, mut sv) = (0usize, 0.0, 0.0);
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(r, c) > 0.0 {
                n += 1;
                su += c as f64 + 0.5;
                sv += r as f64 + 0.5;
            }
        }
    }
    let camera = camera_params(obs);
    if n == 0 {
        return CameraFeature { u: 0.0, v: 0.0, area: 0.0, flag: 0.0, camera };
    }
    let nf = n as f64;
    CameraFeature {
        u: (su / nf - w / 2.0) / (w / 2.0),
        v: (h / 2.0 - sv / nf) / (h / 2.0),
        area: nf / (h * w),
        flag: 1.0,
        camera,
    }
}

/// Flattened block-average downsample plus visibility flag and camera
/// parameters.
pub fn raw_features(obs: &Observation) -> Vec<f64> {
    let img = &obs.image;
    let small = img.downsample(img.height / RAW_SIDE);
    let mut v: Vec<f64> = small.data.iter().map(|&p| p as f64).collect();
    v.push(if img.nonzero_count() > 0 { 1.0 } else { 0.0 });
    v.extend_from_slice(&camera_params(obs));
    v
}

/// One training example: per-camera feature vectors and the depth label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<Vec<f64>>,
    pub label: f64,
}

/// FIFO store of the most recent samples.
#[derive(Debug, Clone)]
pub struct PerceptionBuffer {
    capacity: usize,
    items: VecDeque<Sample>,
}

impl PerceptionBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        PerceptionBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(s);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> &Sample {
        &self.items[i]
    }
}

/// Architecture of the regressor. Parameters are a flat vector: encoder
/// weights, then head weights.
#[derive(Debug, Clone)]
pub struct PerceptionModel {
    pub config: PerceptionConfig,
    encoder: Mlp,
    head: Mlp,
}

struct Forward {
    cams: Vec<Tape>,
    embeddings: Vec<Vec<f64>>,
    head: Tape,
    depth: f64,
}

impl PerceptionModel {
    pub fn new(config: PerceptionConfig) -> Self {
        let d = if config.raw_pixels {
            RAW_SIDE * RAW_SIDE + 5
        } else {
            CameraFeature::DIM
        };
        let encoder = Mlp::new(&[d, config.hidden, config.hidden]);
        let head = Mlp::new(&[config.hidden, config.head_hidden, 1]);
        PerceptionModel { config, encoder, head }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.head.param_count()
    }

    pub fn init(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = self.encoder.init(rng, 1.0);
        p.extend(self.head.init(rng, 1.0));
        p
    }

    pub fn optimizer(&self) -> Optimizer {
        let n = self.param_count();
        match self.config.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd(SgdMomentum::new(n, self.config.lr, self.config.momentum)),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(n, self.config.lr)),
        }
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        if self.config.raw_pixels {
            raw_features(obs)
        } else {
            featurize(obs).to_vec()
        }
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        params.split_at(self.encoder.param_count())
    }

    fn forward(&self, params: &[f64], feats: &[Vec<f64>]) -> Forward {
        let (pe, ph) = self.split(params);
        let h = self.config.hidden;
        let mut pooled = vec![0.0; h];
        let mut cams = Vec::with_capacity(feats.len());
        let mut embeddings = Vec::with_capacity(feats.len());
        for f in feats {
            let tape = self.encoder.forward(pe, f);
            let e: Vec<f64> = tape.output().iter().map(|v| v.tanh()).collect();
            for (p, v) in pooled.iter_mut().zip(&e) {
                *p += v;
            }
            cams.push(tape);
            embeddings.push(e);
        }
        let n = feats.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
        let head = self.head.forward(ph, &pooled);
        let depth = self.config.depth_offset + self.config.depth_scale * head.output()[0];
        Forward { cams, embeddings, head, depth }
    }

    /// Depth estimate; invariant to the order of `feats`.
    pub fn predict(&self, params: &[f64], feats: &[Vec<f64>]) -> Result<f64> {
        if feats.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(self.forward(params, feats).depth)
    }

    /// Mean absolute error over `samples` and its gradient.
    pub fn loss_and_grad(&self, params: &[f64], samples: &[&Sample]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        if samples.is_empty() {
            return (0.0, grad);
        }
        let (pe, ph) = self.split(params);
        let ne = self.encoder.param_count();
        let b = samples.len() as f64;
        let mut loss = 0.0;
        for s in samples {
            let fw = self.forward(params, &s.features);
            let err = fw.depth - s.label;
            loss += err.abs();
            let g_out = err.signum() * (err != 0.0) as u8 as f64 * self.config.depth_scale / b;
            let (ge, gh) = grad.split_at_mut(ne);
            let g_pool = self.head.backward(ph, &fw.head, &[g_out], gh);
            let n = s.features.len() as f64;
            for (tape, e) in fw.cams.iter().zip(&fw.embeddings) {
                let g: Vec<f64> = g_pool.iter().zip(e).map(|(g, y)| g / n * (1.0 - y * y)).collect();
                self.encoder.backward(pe, tape, &g, ge);
            }
        }
        (loss / b, grad)
    }
}

/// One optimizer step on a batch drawn uniformly (with replacement) from
/// the buffer; the whole buffer is used when it holds at most `batch`
/// samples. Returns the batch loss before the step.
pub fn train_step(
    model: &PerceptionModel,
    params: &mut [f64],
    opt: &mut Optimizer,
    buffer: &PerceptionBuffer,
    batch: usize,
    rng: &mut impl Rng,
) -> f64 {
    assert!(!buffer.is_empty(), "train_step needs a non-empty buffer");
    let picked: Vec<&Sample> = if buffer.len() <= batch {
        buffer.iter().collect()
    } else {
        (0..batch).map(|_| buffer.get(rng.random_range(0..buffer.len()))).collect()
    };
    let (loss, grad) = model.loss_and_grad(params, &picked);
    opt.step(params, &grad);
    loss
}

/// A model with its parameters, optimizer and buffer: the single writer
/// during co-training.
#[derive(Debug, Clone)]
pub struct PmTrainer {
    pub model: PerceptionModel,
    pub params: Vec<f64>,
    pub buffer: PerceptionBuffer,
    opt: Optimizer,
    rng: StdRng,
    /// Number of optimizer steps taken so far.
    pub version: u64,
}

impl PmTrainer {
    pub fn new(config: PerceptionConfig, seed: u64) -> Self {
        let model = PerceptionModel::new(config);
        let mut rng = StdRng::seed_from_u64(seed);
        let params = model.init(&mut rng);
        Self::with_params(model, params, rng)
    }

    pub fn from_params(config: PerceptionConfig, params: Vec<f64>, seed: u64) -> Result<Self> {
        let model = PerceptionModel::new(config);
        if params.len() != model.param_count() {
            return Err(Error::Checkpoint(format!(
                "expected {} perception parameters, found {}",
                model.param_count(),
                params.len()
            )));
        }
        Ok(Self::with_params(model, params, StdRng::seed_from_u64(seed)))
    }

    fn with_params(model: PerceptionModel, params: Vec<f64>, rng: StdRng) -> Self {
        PmTrainer {
            buffer: PerceptionBuffer::new(model.config.capacity),
            opt: model.optimizer(),
            model,
            params,
            rng,
            version: 0,
        }
    }

    /// Stores the sample and takes one optimizer step; returns the batch
    /// loss.
    pub fn observe(&mut self, sample: Sample) -> f64 {
        self.buffer.push(sample);
        let batch = self.model.config.batch;
        let loss = train_step(&self.model, &mut self.params, &mut self.opt, &self.buffer, batch, &mut self.rng);
        self.version += 1;
        loss
    }
}

/// Horizontal bearing (radians, world frame, positive toward +x) of the
/// sphere center seen in `obs`.
///
/// The silhouette of a sphere is an ellipse whose center in the image plane
/// is not the projection of the sphere center. Its pixel centroid gives the
/// ellipse center `m` and the widest row its half-width `a` (both in
/// tangent units); the edges `m - a` and `m + a` are the tangent rays, and
/// the center lies halfway between them in angle.
pub fn sphere_bearing(obs: &Observation) -> Option<f64> {
    let img = &obs.image;
    let w = img.width as f64;
    let t = half_fov_tan(&obs.camera);
    let (mut n, mut sum, mut widest) = (0usize, 0.0, 0usize);
    for r in 0..img.height {
        let mut row = 0;
        for c in 0..img.width {
            if img.get(r, c) > 0.0 {
                row += 1;
                sum += c as f64 + 0.5;
            }
        }
        n += row;
        widest = widest.max(row);
    }
    if n == 0 {
        return None;
    }
    let m = (2.0 * (sum / n as f64) / w - 1.0) * t;
    let a = widest as f64 / w * t;
    let phi = ((m - a).atan() + (m + a).atan()) / 2.0;
    Some(obs.camera.yaw.to_radians() + phi)
}

/// Two-view depth: intersects the viewing rays through the sphere in the
/// ground plane (least-squares closest point) and returns its z-distance to
/// the mean camera position.
pub fn triangulate(a: &Observation, b: &Observation) -> Result<f64> {
    let pa = [a.camera.x, a.camera.z];
    let pb = [b.camera.x, b.camera.z];
    if (pa[0] - pb[0]).hypot(pa[1] - pb[1]) < 1e-9 {
        return Err(Error::Degenerate("coincident cameras"));
    }
    let ta = sphere_bearing(a).ok_or(Error::NotVisible(0))?;
    let tb = sphere_bearing(b).ok_or(Error::NotVisible(1))?;
    // Normal equations of sum_i |(I - d_i d_i^T)(p - p_i)|^2.
    let mut m = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    for (p, th) in [(pa, ta), (pb, tb)] {
        let d = [th.sin(), -th.cos()];
        let proj = [[1.0 - d[0] * d[0], -d[0] * d[1]], [-d[1] * d[0], 1.0 - d[1] * d[1]]];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += proj[i][j];
                rhs[i] += proj[i][j] * p[j];
            }
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-10 {
        return Err(Error::Degenerate("parallel rays"));
    }
    let z = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    Ok(((pa[1] + pb[1]) / 2.0 - z).abs())
}
