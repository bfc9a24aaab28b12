//! End-to-end acceptance checks. Each test prints one `criterion N: PASS`
//! or `FAIL` line (run with `--nocapture` to see them) and then asserts.
//! The training runs are sized for a single CPU core.

mod common;

use std::time::{Duration, Instant};

use diser::agent::*;
use diser::grammar::{derive_random, from_text, to_text, validate, Grammar, SystemString};
use diser::harness::metrics::test_episodes;
use diser::harness::run::{report_json, METRICS_FILE, TRACE_FILE};
use diser::harness::*;
use diser::perception::{triangulate, PerceptionConfig, PerceptionModel, Sample};
use diser::search_space::{CameraConfig, RigMode, MOUNT_HEIGHT_RANGE};
use diser::sim_stereo::{label, render, sample_scene, Image};
use diser::error::RejectReason;
use diser::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} ({name}): {} — {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn rejection(g: &Grammar, text: &str) -> Option<RejectReason> {
    match validate(g, &from_text(text).ok()?) {
        Err(Error::Rejected { reason, .. }) => Some(reason),
        _ => None,
    }
}

#[test]
fn criterion_1_grammar_fidelity() {
    let start = Instant::now();
    let g = Grammar::imaging();
    let mut failures = Vec::new();

    for text in ["S A1{a_nn}", "O S O S A1{a_st}", "A2{a_control} I S{wl=tof} A1{a_ToF}"] {
        let s = from_text(text).unwrap();
        if !validate(&g, &s).is_ok_and(|t| t.is_consistent(&g)) {
            failures.push(format!("rejected `{text}`"));
        }
    }
    let rejects = [
        ("O A1{a_nn}", RejectReason::NoSensor),
        ("O S", RejectReason::NoAlgorithm),
        ("S A2{a_control} A1{a_nn}", RejectReason::DanglingA2),
    ];
    for (text, want) in rejects {
        if rejection(&g, text) != Some(want) {
            failures.push(format!("`{text}` not rejected as {want:?}"));
        }
    }
    if from_text("S{hw=0,128} A1{a_nn}").is_ok() {
        failures.push("zero resolution parsed".into());
    }

    for seed in 0..1000 {
        let s = derive_random(&g, seed, 8);
        let round = from_text(&to_text(&s)).ok();
        if validate(&g, &s).is_err() || round.as_ref() != Some(&s) {
            failures.push(format!("derivation {seed} failed"));
        }
    }

    let language = common::enumerate_language(&g, 6);
    let mut disagreements = 0;
    let sequences = common::all_sequences(6);
    for seq in &sequences {
        let s = SystemString::new(seq.iter().copied().map(common::terminal_of).collect());
        if validate(&g, &s).is_ok() != language.contains(seq) {
            disagreements += 1;
        }
    }
    if disagreements > 0 {
        failures.push(format!("{disagreements} oracle disagreements"));
    }

    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(10);
    verdict(
        1,
        "grammar fidelity",
        ok,
        &format!("{} sequences checked against the oracle, {elapsed:.2?}; {failures:?}", sequences.len()),
    );
}

#[test]
fn criterion_2_numerical_core() {
    // Perception model.
    let model = PerceptionModel::new(PerceptionConfig::default());
    let mut rng = StdRng::seed_from_u64(5);
    let params = model.init(&mut rng);
    let samples: Vec<Sample> = (0..4)
        .map(|i| Sample {
            features: (0..=i % 3)
                .map(|_| (0..model.feature_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            label: rng.random_range(10.0..50.0),
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let (_, grad) = model.loss_and_grad(&params, &refs);
    let pm_err = common::max_fd_relative_error(|p| model.loss_and_grad(p, &refs).0, &params, &grad, 1e-5);

    // PPO loss on a two-step toy batch, away from the clipping kink.
    let env = ToyEnv::default();
    let spec = env.spec().clone();
    let policy = Policy::new(env.state_dim(), &spec, 8);
    let cfg = PpoConfig::default();
    let mut ppo_err: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..10u64 {
        let behaviour = policy.init(&mut rng, -0.5);
        let current: Vec<f64> = behaviour.iter().map(|p| p + rng.random_range(-0.02..0.02)).collect();
        let mut env = ToyEnv::default();
        let mut traj = Trajectory::default();
        let mut state = env.reset(seed);
        for _ in 0..2 {
            let d = policy.act(&behaviour, &spec, &state, &mut rng, false);
            let r = env.step(&d.action);
            traj.push(state, d.raw, d.action, d.log_prob, r.reward, d.value, r.done);
            state = r.state;
        }
        *traj.dones.last_mut().unwrap() = true;
        let batch = Batch::from_trajectory(&traj, &cfg);
        let idx = [0, 1];
        let (_, g, stats) = loss_and_grad(&policy, &current, &batch, &idx, &cfg);
        if stats.clip_fraction > 0.0 {
            continue;
        }
        let f = |p: &[f64]| loss_and_grad(&policy, p, &batch, &idx, &cfg).0;
        ppo_err = ppo_err.max(common::max_fd_relative_error(f, &current, &g, 1e-5));
        checked += 1;
    }

    // GAE against the double loop.
    let mut gae_err: f64 = 0.0;
    for _ in 0..20 {
        let mut t = Trajectory::default();
        for i in 0..60 {
            let done = i == 59 || rng.random_bool(0.1);
            let a = diser::search_space::Action { values: vec![] };
            t.push(vec![], vec![], a, 0.0, rng.random_range(-1.0..=1.0), rng.random_range(-2.0..2.0), done);
        }
        let (gamma, lambda) = (rng.random_range(0.5..1.0), rng.random_range(0.0..1.0));
        let (adv, _) = compute_gae(&t, gamma, lambda);
        let oracle = common::gae_brute_force(&t.rewards, &t.values, &t.dones, gamma, lambda);
        for (a, b) in adv.iter().zip(&oracle) {
            gae_err = gae_err.max((a - b).abs());
        }
    }

    let ok = pm_err < 1e-4 && ppo_err < 1e-4 && checked >= 5 && gae_err < 1e-10;
    verdict(
        2,
        "numerical core",
        ok,
        &format!("PM fd {pm_err:.2e}, PPO fd {ppo_err:.2e} over {checked} batches, GAE {gae_err:.2e}"),
    );
}

#[test]
fn criterion_3_ppo_sanity() {
    let start = Instant::now();
    let mut cfg = RunConfig { env: EnvKind::Toy, seed: 0, ..Default::default() };
    cfg.train.total_steps = 100_000;
    cfg.report.test_episodes = 1000;
    let (_, art) = train_run(&cfg).unwrap();
    let report = compute_report(&cfg, &art).unwrap();
    let target = 0.9 * ToyEnv::OPTIMAL_MEAN_RETURN;
    let elapsed = start.elapsed();
    let ok = report.mean_test_return >= target && elapsed < Duration::from_secs(300);
    verdict(
        3,
        "PPO sanity",
        ok,
        &format!(
            "mean return {:.4} vs target {target:.4} after {} steps in {elapsed:.1?}",
            report.mean_test_return, cfg.train.total_steps
        ),
    );
}

fn touches_border(img: &Image) -> bool {
    (0..img.height).any(|r| img.get(r, 0) > 0.0 || img.get(r, img.width - 1) > 0.0)
        || (0..img.width).any(|c| img.get(0, c) > 0.0 || img.get(img.height - 1, c) > 0.0)
}

#[test]
fn criterion_4_triangulation() {
    let mut rng = StdRng::seed_from_u64(44);
    let cam = |rng: &mut StdRng| CameraConfig {
        x: rng.random_range(-15.0..15.0),
        z: rng.random_range(69.0..80.0),
        yaw: rng.random_range(-30.0..30.0),
        ..CameraConfig::default()
    };
    let (mut checked, mut worst, mut seed) = (0, 0.0f64, 50_000u64);
    while checked < 500 {
        seed += 1;
        let scene = sample_scene(seed);
        let (a, b) = (cam(&mut rng), cam(&mut rng));
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
    verdict(4, "triangulation", worst <= 0.02, &format!("worst relative error {:.3}% over {checked} scenes", 100.0 * worst));
}

#[test]
fn criterion_5_stereo_trends() {
    let mut cfg = RunConfig { env: EnvKind::Stereo, seed: 0, ..Default::default() };
    cfg.train.total_steps = 100_000;
    cfg.train.ppo.rollout_steps = 2000;
    cfg.report.test_episodes = 500;
    cfg.report.baseline_scenes = 300;
    cfg.protocol.n_test = 20;
    cfg.protocol.top_k = 5;
    cfg.protocol.n_reval = 5;
    let (_, art) = train_run(&cfg).unwrap();
    let report = compute_report(&cfg, &art).unwrap();

    let l1: Vec<Option<f64>> = report.coverage.as_ref().unwrap().buckets.iter().map(|b| b.mean_l1).collect();
    let decreasing = l1.iter().all(Option::is_some) && l1.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());

    let pm = art.pm.as_ref().unwrap();
    let mut env = StereoEnv::new(cfg.stereo.clone(), pm.frozen());
    let eps = test_episodes(&art.policy, &art.params, &mut env, cfg.report.test_episodes, cfg.seed, false);
    let covered = eps.iter().filter(|e| e.infos.last().is_some_and(|i| i.coverage >= 2.0)).count() as f64 / eps.len() as f64;

    let b = report.baseline.as_ref().unwrap();
    let [one, two, three] = b.grid_means();
    let ordered = three <= two && two <= one;
    let wide_beats_narrow = b.two.last().unwrap() < b.two.first().unwrap();

    let ok = decreasing && covered >= 0.7 && ordered && wide_beats_narrow;
    verdict(
        5,
        "stereo trends",
        ok,
        &format!(
            "bucket L1 {l1:.2?}; coverage>=2 in {:.1}%; grid means 1/2/3-cam {one:.2}/{two:.2}/{three:.2}; \
             2-cam L1 at x={} {:.2} vs x={} {:.2}",
            100.0 * covered,
            b.x.last().unwrap(),
            b.two.last().unwrap(),
            b.x.first().unwrap(),
            b.two.first().unwrap()
        ),
    );
}

fn rig_config(mode: RigMode) -> RunConfig {
    let mut cfg = RunConfig { env: EnvKind::Rig, seed: 0, ..Default::default() };
    cfg.rig.mode = mode;
    cfg.train.total_steps = 200_000;
    cfg.train.ppo.rollout_steps = 1200;
    cfg.report.test_episodes = 300;
    cfg
}

#[test]
fn criterion_6_rig_trends() {
    let mut lines = Vec::new();
    let mut ok = true;
    for mode in [RigMode::A, RigMode::B] {
        let cfg = rig_config(mode);
        let (out, art) = train_run(&cfg).unwrap();
        let report = compute_report(&cfg, &art).unwrap();
        // Random search gets the same number of environment steps.
        let mut env = RigEnv::new(cfg.rig.clone()).unwrap();
        let episodes = out.trace.len() / env.spec().episode_len;
        let random = random_search(&mut env, episodes, cfg.seed);
        let random_mean = random.returns.iter().sum::<f64>() / random.returns.len() as f64;
        let gain = report.mean_test_return / random_mean - 1.0;
        let sel = report.selected.as_ref().unwrap();
        let top = cfg.rig.roof.height + MOUNT_HEIGHT_RANGE;
        let high = sel.cameras.iter().all(|c| c.z >= top - 0.05);
        ok &= gain >= 0.2 && high;
        lines.push(format!(
            "mode {}: PPO {:.3} vs random {random_mean:.3} (+{:.0}%), selected heights {:?}",
            mode.tag(),
            report.mean_test_return,
            100.0 * gain,
            sel.cameras.iter().map(|c| (c.z * 100.0).round() / 100.0).collect::<Vec<_>>()
        ));
    }
    let cfg = rig_config(RigMode::C);
    let (_, art) = train_run(&cfg).unwrap();
    let report = compute_report(&cfg, &art).unwrap();
    let sel = report.selected.as_ref().unwrap();
    let forward = sel.cameras.iter().filter(|c| c.yaw > -90.0 && c.yaw < 90.0).count();
    let few = !sel.cameras.is_empty() && sel.cameras.len() <= 4;
    let facing = forward as f64 >= 0.8 * sel.cameras.len() as f64;
    ok &= few && facing;
    lines.push(format!(
        "mode c: {} cameras, yaws {:?}",
        sel.cameras.len(),
        sel.cameras.iter().map(|c| c.yaw.round()).collect::<Vec<_>>()
    ));
    verdict(6, "rig trends", ok, &lines.join("; "));
}

#[test]
fn criterion_7_illumination() {
    let mut cfg = RunConfig { env: EnvKind::Stereo, seed: 0, ..Default::default() };
    cfg.stereo.illumination = true;
    cfg.train.total_steps = 100_000;
    cfg.train.ppo.rollout_steps = 2000;
    let (_, art) = train_run(&cfg).unwrap();
    let pm = art.pm.as_ref().unwrap();
    let mut env = StereoEnv::new(cfg.stereo.clone(), pm.frozen());
    let eps = test_episodes(&art.policy, &art.params, &mut env, 200, cfg.seed, true);
    let s = diser::harness::metrics::light_summary(&eps);
    let ok = s.mean_final_intensity > 0.5 && s.monotone_lit_fraction >= 0.6;
    verdict(
        7,
        "illumination",
        ok,
        &format!(
            "mean final intensity {:.3} ({:.0}% above 0.5), lit pixels non-decreasing in {:.1}% of {} episodes",
            s.mean_final_intensity,
            100.0 * s.bright_fraction,
            100.0 * s.monotone_lit_fraction,
            s.episodes
        ),
    );
}

#[test]
fn criterion_8_determinism_and_persistence() {
    let mut cfg = RunConfig { env: EnvKind::Stereo, seed: 17, ..Default::default() };
    cfg.train.total_steps = 2000;
    cfg.train.ppo.rollout_steps = 500;
    cfg.report.test_episodes = 50;
    cfg.report.baseline_scenes = 10;
    cfg.report.baseline_points = 7;
    cfg.protocol.n_test = 10;
    cfg.protocol.top_k = 3;
    cfg.protocol.n_reval = 3;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let same_trace = read(&a, TRACE_FILE) == read(&b, TRACE_FILE);
    let again = report_json(&evaluate_run(a.path()).unwrap()).unwrap();
    let saved = String::from_utf8(read(&a, METRICS_FILE)).unwrap();
    let reproduced = again == saved;
    verdict(
        8,
        "determinism and persistence",
        same_trace && reproduced,
        &format!("trace identical: {same_trace}; eval reproduces metrics.json: {reproduced}"),
    );
}
