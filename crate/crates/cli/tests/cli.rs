use std::path::Path;
use std::process::{Command, Output};

fn diser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diser"))
        .args(args)
        .env_remove("DISER_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config(dir: &Path, env: &str) -> String {
    let path = dir.join(format!("{env}.toml"));
    let text = format!(
        "env = \"{env}\"\n\
         [train]\ntotal_steps = 200\n[train.ppo]\nrollout_steps = 100\nhidden = 8\n\
         [report]\ntest_episodes = 10\nbaseline_scenes = 2\nbaseline_points = 3\n\
         [protocol]\nn_test = 6\ntop_k = 2\nn_reval = 2\n"
    );
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn parse_accepts_and_rejects() {
    let ok = diser(&["parse", "I O S A2{autofocus} O S A1{a_ToF}"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).starts_with("valid"));
    let bad = diser(&["parse", "O A1{a_nn}"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("no_sensor"));
    let garbage = diser(&["parse", "Q{"]);
    assert_eq!(garbage.status.code(), Some(2));
}

#[test]
fn generated_strings_parse() {
    let out = diser(&["generate", "--seed", "5", "--count", "20"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 20);
    for line in text.lines() {
        assert!(diser(&["parse", line]).status.success(), "{line}");
    }
}

#[test]
fn train_eval_protocol_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path(), "stereo");
    let run = tmp.path().join("run");
    let run_s = run.to_str().unwrap();
    let out = diser(&["train", "--config", &cfg, "--seed", "3", "--out", run_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "pm.ckpt", "policy.ckpt", "metrics.json", "selected_rig.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let eval = diser(&["eval", run_s]);
    assert!(eval.status.success());
    assert_eq!(stdout(&eval).trim(), "metrics reproduced");

    // Same seed, same trace.
    let run2 = tmp.path().join("run2");
    assert!(diser(&["train", "--config", &cfg, "--seed", "3", "--out", run2.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(run.join("trace.csv")).unwrap(), std::fs::read(run2.join("trace.csv")).unwrap());

    let sel = tmp.path().join("sel");
    let p = diser(&["protocol", run_s, "--out", sel.to_str().unwrap()]);
    assert!(p.status.success());
    assert!(sel.join("selected_rig.txt").exists());

    // Tampered metrics are detected.
    std::fs::write(run.join("metrics.json"), "{}").unwrap();
    assert_eq!(diser(&["eval", run_s]).status.code(), Some(1));
}

#[test]
fn random_search_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rs");
    let o = diser(&["random-search", "--env", "rig", "--mode", "a", "--episodes", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    // Schema line, header, five six-step episodes.
    assert_eq!(trace.lines().count(), 2 + 30);
    assert!(std::fs::read_to_string(out.join("config.toml")).unwrap().contains("mode = \"a\""));
    assert_eq!(diser(&["random-search", "--env", "mono", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn unknown_config_keys_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "env = \"toy\"\nlearning_rate = 1\n").unwrap();
    let o = diser(&["train", "--config", path.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn render_and_overfit_write_files() {
    let tmp = tempfile::tempdir().unwrap();
    let r = tmp.path().join("render");
    let o = diser(&["render", "--seed", "2", "--out", r.to_str().unwrap(), "--light-angle", "-5", "--light-intensity", "0"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("; 0 lit pixels"));
    assert!(r.join("view.bin").exists() && r.join("scene.txt").exists());
    let pm = tmp.path().join("pm");
    let o = diser(&["pm-overfit", "--steps", "50", "--out", pm.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(pm.join("losses.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 50);
}
