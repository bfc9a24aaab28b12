use diser::perception::{triangulate, PerceptionBuffer, PerceptionConfig, PerceptionModel, Sample};
use diser::search_space::CameraConfig;
use diser::sim_stereo::{coverage, label, render, sample_scene, Image, SphereScene};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn touches_border(img: &Image) -> bool {
    (0..img.height).any(|r| img.get(r, 0) > 0.0 || img.get(r, img.width - 1) > 0.0)
        || (0..img.width).any(|c| img.get(0, c) > 0.0 || img.get(img.height - 1, c) > 0.0)
}

fn random_camera(rng: &mut StdRng) -> CameraConfig {
    CameraConfig {
        x: rng.random_range(-15.0..15.0),
        z: rng.random_range(69.0..80.0),
        yaw: rng.random_range(-30.0..30.0),
        ..CameraConfig::default()
    }
}

/// Independent projection of a sphere's silhouette: the two tangent rays
/// in the horizontal plane bound the ellipse, whose center column is the
/// midpoint of their image-plane intersections.
fn analytic_center_column(scene: &SphereScene, cam: &CameraConfig) -> Option<f64> {
    let (dx, dz) = (scene.x - cam.x, scene.z - cam.z);
    let dist = dx.hypot(dz);
    let bearing = dx.atan2(-dz) - cam.yaw.to_radians();
    let half = (scene.radius / dist).asin();
    let t = (cam.fov.to_radians() / 2.0).tan();
    let (lo, hi) = ((bearing - half).tan(), (bearing + half).tan());
    if bearing.abs() + half >= std::f64::consts::FRAC_PI_2 {
        return None;
    }
    let mid = (lo + hi) / 2.0;
    Some(64.0 + 64.0 * mid / t)
}

#[test]
fn silhouette_centroid_matches_projection() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 1000 {
        seed += 1;
        let scene = sample_scene(seed);
        let cam = random_camera(&mut rng);
        let img = render(&scene, &cam, None).image;
        if img.nonzero_count() == 0 || touches_border(&img) {
            continue;
        }
        let Some(expected) = analytic_center_column(&scene, &cam) else { continue };
        let (mut n, mut su, mut sv) = (0.0, 0.0, 0.0);
        for r in 0..128 {
            for c in 0..128 {
                if img.get(r, c) > 0.0 {
                    n += 1.0;
                    su += c as f64 + 0.5;
                    sv += r as f64 + 0.5;
                }
            }
        }
        assert!((su / n - expected).abs() <= 0.5, "seed {seed}: {} vs {expected}", su / n);
        assert!((sv / n - 64.0).abs() <= 0.5);
        checked += 1;
    }
}

#[test]
fn rendering_is_resolution_consistent() {
    let mut rng = StdRng::seed_from_u64(5);
    for seed in 0..40 {
        let scene = sample_scene(seed);
        let cam = random_camera(&mut rng);
        let native = render(&scene, &cam, None).image;
        let fine = CameraConfig { resolution: (256, 256), ..cam };
        let down = render(&scene, &fine, None).image.downsample(2);
        for r in 0..128 {
            for c in 0..128 {
                let a = native.get(r, c) > 0.0;
                let b = down.get(r, c) >= 0.5;
                if a != b {
                    // Only allowed where the native silhouette has an edge.
                    let edge = (r.saturating_sub(1)..=(r + 1).min(127))
                        .flat_map(|rr| (c.saturating_sub(1)..=(c + 1).min(127)).map(move |cc| (rr, cc)))
                        .any(|(rr, cc)| (native.get(rr, cc) > 0.0) != a);
                    assert!(edge, "seed {seed} pixel ({r},{c})");
                }
            }
        }
    }
}

#[test]
fn triangulation_within_two_percent() {
    let mut rng = StdRng::seed_from_u64(21);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 1000;
    while checked < 500 {
        seed += 1;
        let scene = sample_scene(seed);
        let a = random_camera(&mut rng);
        let b = random_camera(&mut rng);
        if (a.x - b.x).abs() < 10.0 {
            continue;
        }
        let (oa, ob) = (render(&scene, &a, None), render(&scene, &b, None));
        if [&oa, &ob].iter().any(|o| o.image.nonzero_count() == 0 || touches_border(&o.image)) {
            continue;
        }
        let truth = label(&scene, &[a, b]).unwrap();
        let est = triangulate(&oa, &ob).unwrap();
        worst = worst.max((est - truth).abs() / truth);
        checked += 1;
    }
    assert!(worst <= 0.02, "worst relative error {worst}");
}

#[test]
fn perception_gradient_matches_finite_differences() {
    let model = PerceptionModel::new(PerceptionConfig::default());
    let mut rng = StdRng::seed_from_u64(2);
    let params = model.init(&mut rng);
    let samples: Vec<Sample> = (0..3)
        .map(|i| Sample {
            features: (0..=i).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            label: 10.0 + 20.0 * i as f64,
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let (_, grad) = model.loss_and_grad(&params, &refs);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += eps;
        let up = model.loss_and_grad(&p, &refs).0;
        p[i] -= 2.0 * eps;
        let down = model.loss_and_grad(&p, &refs).0;
        let fd = (up - down) / (2.0 * eps);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn buffer_evicts_oldest() {
    let mut b = PerceptionBuffer::new(100);
    for i in 0..130 {
        b.push(Sample { features: vec![], label: i as f64 });
    }
    assert_eq!(b.len(), 100);
    assert_eq!(b.iter().next().unwrap().label, 30.0);
}

proptest! {
    #[test]
    fn predict_is_permutation_invariant(feats in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 8), 1..6), seed in 0u64..100, rot in 0usize..6) {
        let model = PerceptionModel::new(PerceptionConfig::default());
        let p = model.init(&mut StdRng::seed_from_u64(seed));
        let mut shuffled = feats.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = model.predict(&p, &feats).unwrap();
        let b = model.predict(&p, &shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn coverage_ignores_camera_order(seed in 0u64..500, xs in prop::collection::vec((-15.0f64..15.0, -90.0f64..90.0), 0..4)) {
        let scene = sample_scene(seed);
        let cams: Vec<CameraConfig> = xs.iter().map(|&(x, yaw)| CameraConfig { x, z: 75.0, yaw, resolution: (32, 32), ..CameraConfig::default() }).collect();
        let mut rev = cams.clone();
        rev.reverse();
        prop_assert_eq!(coverage(&scene, &cams), coverage(&scene, &rev));
    }
}
