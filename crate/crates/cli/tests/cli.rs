use std::path::Path;
use std::process::{Command, Output};

fn coevo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coevo"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("run.toml");
    std::fs::write(
        &p,
        "seed = 2\ntemplates = [\"recorder_save\", \"settings_query\"]\neval_groups = 1\n\n[train]\nmax_steps = 30\n",
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gen_env_and_decompose_write_their_files() {
    let d = tempfile::tempdir().unwrap();
    assert!(coevo(d.path(), &["gen-env"]).status.success());
    let env: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("env.json")).unwrap()).unwrap();
    assert!(env.is_object());

    let cfg = small_config(d.path());
    let out = coevo(d.path(), &["--config", &cfg, "decompose"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let samples: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path().join("samples.json")).unwrap()).unwrap();
    let first = &samples.as_array().unwrap()[0];
    assert_eq!(first["conversations"][0]["from"], "human");
    let image = first["image"].as_str().unwrap();
    assert!(d.path().join(image).exists());
    assert!(d.path().join("kb.json").exists());
}

#[test]
fn evolve_repairs_a_planted_defect() {
    let d = tempfile::tempdir().unwrap();
    let out = coevo(d.path(), &["evolve", "recorder_save", "--corrupt", "missing-step", "--step", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.path().join("loop_recorder_save.csv")).unwrap();
    assert!(csv.lines().count() >= 3, "{csv}");
}

#[test]
fn train_eval_replay_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let out = coevo(d.path(), &["--config", &cfg, "train", "--arm", "sft"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(d.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 31);

    let ck = d.path().join("checkpoint.json");
    let out = coevo(d.path(), &["--config", &cfg, "eval", "--checkpoint", ck.to_str().unwrap(), "--trajectories"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.path().join("eval.json").exists());
    let traj = std::fs::read_dir(d.path().join("trajectories")).unwrap().next().unwrap().unwrap().path();
    let out = coevo(d.path(), &["replay", traj.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, "rounds = \"many\"\n").unwrap();
    let out = coevo(d.path(), &["--config", bad.to_str().unwrap(), "gen-env"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = coevo(d.path(), &["record-demo", "no_such_template"]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = d.path().join("t.json");
    std::fs::write(&garbage, "{\"format_version\": 1").unwrap();
    assert_eq!(coevo(d.path(), &["replay", garbage.to_str().unwrap()]).status.code(), Some(2));
}
