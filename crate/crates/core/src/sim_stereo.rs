//! Ray-cast sphere scenes for the stereo depth task.
//!
//! A single white sphere sits in the `y = 0` plane; pinhole cameras at
//! `y = 0` look along `(sin yaw, 0, -cos yaw)`. Hits render as a flat
//! silhouette (no shading, texture or floor), so a single view carries no
//! monocular depth cue beyond apparent size.

use std::io::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{CameraConfig, SpotLight};

pub const RADIUS_RANGE: (f64, f64) = (3.0, 9.0);
pub const X_RANGE: (f64, f64) = (-10.0, 10.0);
pub const Z_RANGE: (f64, f64) = (1.0, 60.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereScene {
    pub radius: f64,
    pub x: f64,
    pub z: f64,
    pub seed: u64,
}

impl SphereScene {
    pub fn center(&self) -> [f64; 3] {
        [self.x, 0.0, self.z]
    }
}

/// Uniform radius and center within the published bounds.
pub fn sample_scene(seed: u64) -> SphereScene {
    let mut rng = StdRng::seed_from_u64(seed);
    SphereScene {
        radius: rng.random_range(RADIUS_RANGE.0..=RADIUS_RANGE.1),
        x: rng.random_range(X_RANGE.0..=X_RANGE.1),
        z: rng.random_range(Z_RANGE.0..=Z_RANGE.1),
        seed,
    }
}

/// Spot light of the illumination extension.
///
/// The light sits at a fixed position behind the camera region and aims
/// along `(sin angle, 0, -cos angle)`. A surface point inside the cone
/// receives `intensity * min(1, (reference_distance / d)^2)`; the sensor
/// reads anything under `noise_floor` as black.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightModel {
    pub position: [f64; 3],
    pub cone_half_angle: f64,
    pub reference_distance: f64,
    pub noise_floor: f64,
}

impl Default for LightModel {
    fn default() -> Self {
        LightModel {
            position: [0.0, 0.0, 80.0],
            cone_half_angle: 10.0,
            reference_distance: 60.0,
            noise_floor: 0.25,
        }
    }
}

impl LightModel {
    fn irradiance(&self, light: &SpotLight, p: [f64; 3]) -> f64 {
        let a = light.angle.to_radians();
        let dir = [a.sin(), 0.0, -a.cos()];
        let v = sub(p, self.position);
        let dist = norm(v);
        if dist == 0.0 {
            return 0.0;
        }
        let cos = dot(v, dir) / dist;
        if cos < self.cone_half_angle.to_radians().cos() {
            return 0.0;
        }
        let falloff = (self.reference_distance / dist).powi(2).min(1.0);
        let e = light.intensity * falloff;
        if e < self.noise_floor {
            0.0
        } else {
            e.min(1.0)
        }
    }
}

/// Row-major intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.0).count()
    }

    /// Block-averages by an integer factor.
    pub fn downsample(&self, factor: usize) -> Image {
        assert!(factor > 0 && self.height % factor == 0 && self.width % factor == 0);
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = Image::zeros(h, w);
        let norm = (factor * factor) as f32;
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for dr in 0..factor {
                    for dc in 0..factor {
                        acc += self.get(r * factor + dr, c * factor + dc);
                    }
                }
                out.data[r * w + c] = acc / norm;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub image: Image,
    pub camera: CameraConfig,
    pub light: Option<SpotLight>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Camera frame: forward, right and up unit vectors.
pub fn camera_basis(cam: &CameraConfig) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let y = cam.yaw.to_radians();
    let forward = [y.sin(), 0.0, -y.cos()];
    let right = [y.cos(), 0.0, y.sin()];
    (forward, right, [0.0, 1.0, 0.0])
}

/// Tangent of half the horizontal FoV.
pub fn half_fov_tan(cam: &CameraConfig) -> f64 {
    (cam.fov.to_radians() / 2.0).tan()
}

/// Casts one primary ray per pixel center. Without a light every hit is 1;
/// with one, hits take the light's irradiance at the surface point.
pub fn render(scene: &SphereScene, cam: &CameraConfig, light: Option<(&SpotLight, &LightModel)>) -> Observation {
    let (h, w) = (cam.resolution.0 as usize, cam.resolution.1 as usize);
    let mut image = Image::zeros(h, w);
    let origin = [cam.x, cam.y, cam.z];
    let (f, r, u) = camera_basis(cam);
    let tx = half_fov_tan(cam);
    let ty = tx * h as f64 / w as f64;
    let oc = sub(origin, scene.center());
    let c = dot(oc, oc) - scene.radius * scene.radius;
    for row in 0..h {
        let ny = (1.0 - 2.0 * (row as f64 + 0.5) / h as f64) * ty;
        for col in 0..w {
            let nx = (2.0 * (col as f64 + 0.5) / w as f64 - 1.0) * tx;
            let d = [
                f[0] + nx * r[0] + ny * u[0],
                f[1] + nx * r[1] + ny * u[1],
                f[2] + nx * r[2] + ny * u[2],
            ];
            let a = dot(d, d);
            let b = dot(d, oc);
            let disc = b * b - a * c;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / a;
            if t <= 0.0 {
                continue;
            }
            let value = match light {
                None => 1.0,
                Some((spot, model)) => {
                    let p = [origin[0] + t * d[0], origin[1] + t * d[1], origin[2] + t * d[2]];
                    model.irradiance(spot, p)
                }
            };
            image.data[row * w + col] = value as f32;
        }
    }
    Observation {
        image,
        camera: *cam,
        light: light.map(|(s, _)| *s),
    }
}

/// Absolute z-distance from the sphere to the mean camera position.
pub fn label(scene: &SphereScene, cams: &[CameraConfig]) -> Result<f64> {
    if cams.is_empty() {
        return Err(Error::NoCameras);
    }
    let mean_z = cams.iter().map(|c| c.z).sum::<f64>() / cams.len() as f64;
    Ok((mean_z - scene.z).abs())
}

/// Number of cameras with at least one pixel on the sphere under full
/// illumination.
pub fn coverage(scene: &SphereScene, cams: &[CameraConfig]) -> usize {
    cams.iter()
        .filter(|c| render(scene, c, None).image.nonzero_count() > 0)
        .count()
}

/// Writes `<name>.bin` (little-endian f32, row-major) and a `<name>.txt`
/// header describing it.
pub fn export_observation(dir: &Path, name: &str, obs: &Observation) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bin = Vec::with_capacity(obs.image.data.len() * 4);
    for v in &obs.image.data {
        bin.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.join(format!("{name}.bin")), bin)?;
    let c = &obs.camera;
    let mut hdr = std::fs::File::create(dir.join(format!("{name}.txt")))?;
    writeln!(hdr, "format f32le row-major")?;
    writeln!(hdr, "dims {} {}", obs.image.height, obs.image.width)?;
    writeln!(hdr, "camera x={} y={} z={} yaw={} fov={}", c.x, c.y, c.z, c.yaw, c.fov)?;
    match obs.light {
        Some(l) => writeln!(hdr, "light angle={} intensity={}", l.angle, l.intensity)?,
        None => writeln!(hdr, "light none")?,
    }
    Ok(())
}

pub fn export_scene(dir: &Path, scene: &SphereScene) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("scene.txt"),
        format!(
            "seed {}\nradius {}\nx {}\ny 0\nz {}\n",
            scene.seed, scene.radius, scene.x, scene.z
        ),
    )?;
    Ok(())
}

/// Reads back a grid written by [`export_observation`].
pub fn import_image(dir: &Path, name: &str) -> Result<Image> {
    let hdr_path = dir.join(format!("{name}.txt"));
    let hdr = std::fs::read_to_string(&hdr_path).map_err(|_| Error::MissingFile(hdr_path.clone()))?;
    let dims = hdr
        .lines()
        .find_map(|l| l.strip_prefix("dims "))
        .ok_or_else(|| Error::Config("header lacks dims".into()))?;
    let mut it = dims.split_whitespace().map(|s| s.parse::<usize>());
    let (Some(Ok(height)), Some(Ok(width))) = (it.next(), it.next()) else {
        return Err(Error::Config("bad dims line".into()));
    };
    let bytes = std::fs::read(dir.join(format!("{name}.bin")))?;
    if bytes.len() != height * width * 4 {
        return Err(Error::Config("grid size does not match header".into()));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Image { height, width, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(x: f64, z: f64, yaw: f64) -> CameraConfig {
        CameraConfig {
            x,
            z,
            yaw,
            ..CameraConfig::default()
        }
    }

    #[test]
    fn sampling_is_seeded_and_bounded() {
        assert_eq!(sample_scene(7), sample_scene(7));
        let n = 10_000;
        let mut sum_r = 0.0;
        for seed in 0..n {
            let s = sample_scene(seed);
            assert!((3.0..=9.0).contains(&s.radius));
            assert!((-10.0..=10.0).contains(&s.x));
            assert!((1.0..=60.0).contains(&s.z));
            sum_r += s.radius;
        }
        let mean = sum_r / n as f64;
        assert!((mean - 6.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn on_axis_disk_radius_matches_pinhole_projection() {
        let scene = SphereScene { radius: 6.0, x: 0.0, z: 45.0, seed: 0 };
        let c = cam(0.0, 75.0, 0.0);
        let img = render(&scene, &c, None).image;
        let predicted = 64.0 * (6.0 / 30.0) / half_fov_tan(&c);
        // Area-equivalent disk radius.
        let measured = (img.nonzero_count() as f64 / std::f64::consts::PI).sqrt();
        assert!((measured - predicted).abs() <= 1.0, "{measured} vs {predicted}");
        // Centered on the principal point.
        let (mut su, mut sv) = (0.0, 0.0);
        for r in 0..128 {
            for c in 0..128 {
                if img.get(r, c) > 0.0 {
                    su += c as f64 + 0.5;
                    sv += r as f64 + 0.5;
                }
            }
        }
        let n = img.nonzero_count() as f64;
        assert!((su / n - 64.0).abs() < 1e-9 && (sv / n - 64.0).abs() < 1e-9);
    }

    #[test]
    fn camera_facing_away_sees_nothing() {
        let scene = SphereScene { radius: 6.0, x: 0.0, z: 30.0, seed: 0 };
        let img = render(&scene, &cam(0.0, 75.0, 180.0), None).image;
        assert_eq!(img.nonzero_count(), 0);
    }

    #[test]
    fn dark_light_renders_black() {
        let scene = SphereScene { radius: 9.0, x: 0.0, z: 50.0, seed: 0 };
        let model = LightModel::default();
        let off = SpotLight { angle: 0.0, intensity: 0.0 };
        assert_eq!(render(&scene, &cam(0.0, 75.0, 0.0), Some((&off, &model))).image.nonzero_count(), 0);
        let on = SpotLight { angle: 0.0, intensity: 1.0 };
        assert!(render(&scene, &cam(0.0, 75.0, 0.0), Some((&on, &model))).image.nonzero_count() > 0);
        // Aimed far away from the sphere.
        let aside = SpotLight { angle: 55.0, intensity: 1.0 };
        assert_eq!(render(&scene, &cam(0.0, 75.0, 0.0), Some((&aside, &model))).image.nonzero_count(), 0);
    }

    #[test]
    fn labels() {
        let scene = SphereScene { radius: 5.0, x: 0.0, z: 30.0, seed: 0 };
        assert_eq!(label(&scene, &[cam(0.0, 75.0, 0.0)]).unwrap(), 45.0);
        assert_eq!(label(&scene, &[cam(-5.0, 70.0, 0.0), cam(5.0, 80.0, 0.0)]).unwrap(), 45.0);
        assert!(matches!(label(&scene, &[]), Err(Error::NoCameras)));
    }

    #[test]
    fn coverage_counts() {
        let scene = SphereScene { radius: 5.0, x: 0.0, z: 30.0, seed: 0 };
        let facing = [cam(-10.0, 75.0, 0.0), cam(0.0, 75.0, 0.0), cam(10.0, 75.0, 0.0)];
        assert_eq!(coverage(&scene, &facing), 3);
        let mixed = [cam(-10.0, 75.0, 0.0), cam(0.0, 75.0, 0.0), cam(10.0, 75.0, 180.0)];
        assert_eq!(coverage(&scene, &mixed), 2);
        let mut reversed = mixed;
        reversed.reverse();
        assert_eq!(coverage(&scene, &reversed), 2);
        assert_eq!(coverage(&scene, &[]), 0);
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = sample_scene(3);
        let obs = render(&scene, &cam(0.0, 75.0, 0.0), None);
        export_observation(dir.path(), "cam0", &obs).unwrap();
        assert_eq!(import_image(dir.path(), "cam0").unwrap(), obs.image);
    }
}
