use std::path::Path;
use std::process::{Command, Output};

use harvest::nnet::Checkpoint;
use harvest::radio::ShadowField;
use harvest::world::{load_map, TOY_MAP};

fn harvest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harvest")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const TINY: &str = r#"
seed = 3
[map]
name = "toy"
[scenario]
device_count = [2, 2]
flight_budget = [20, 25]
[net]
conv = [{ filters = 4, kernel = 3, stride = 2 }]
dense = [16]
[train]
total_steps = 300
batch_size = 8
eval_every = 2
bin_width = 100
[eval]
episodes = 6
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_eval_rollout_round() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let run = dir.path().join("run");
    let out = harvest(&["train", "--config", &config, "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = Checkpoint::load(&run.join("checkpoint.bin")).unwrap();
    assert_eq!(ckpt.step, 300);
    let log = std::fs::read_to_string(run.join("trainlog.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["record"], "run");
    assert_eq!(first["seed"], 3);
    assert!(run.join("config.toml").exists());

    let ckpt_path = run.join("checkpoint.bin");
    let report = dir.path().join("eval.json");
    let out = harvest(&["eval", "--config", &config, "--checkpoint", s(&ckpt_path), "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first_report = std::fs::read_to_string(&report).unwrap();
    let v: serde_json::Value = serde_json::from_str(&first_report).unwrap();
    let episodes = v["episodes"].as_array().unwrap();
    assert_eq!(episodes.len(), 6);
    assert_eq!(v["aggregate"]["episodes"], 6);
    let mean = |key: &str| episodes.iter().map(|e| e[key].as_f64().unwrap()).sum::<f64>() / 6.0;
    assert!((v["aggregate"]["collection_ratio"].as_f64().unwrap() - mean("collection_ratio")).abs() < 1e-12);
    let landed = episodes.iter().filter(|e| e["has_landed"].as_bool().unwrap()).count() as f64 / 6.0;
    assert!((v["aggregate"]["has_landed"].as_f64().unwrap() - landed).abs() < 1e-12);

    // Same seed, same numbers.
    let out = harvest(&["eval", "--config", &config, "--checkpoint", s(&ckpt_path), "--out", s(&report)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), first_report);

    let traj = dir.path().join("traj.json");
    let out =
        harvest(&["rollout", "--config", &config, "--checkpoint", s(&ckpt_path), "--seed", "8", "--out", s(&traj)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&traj).unwrap()).unwrap();
    assert_eq!(t["seed"], 8);
    assert_eq!(t["steps"].as_array().unwrap().len() as u64, t["metrics"]["steps_used"].as_u64().unwrap());
}

#[test]
fn scripted_policies_need_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let traj = dir.path().join("land.json");
    let out = harvest(&["rollout", "--config", &config, "--policy", "land", "--out", s(&traj)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    let t: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(t["steps"].as_array().unwrap().len(), 1);
    assert_eq!(t["metrics"]["has_landed"], true);
    // One step object per line.
    assert!(text.lines().any(|l| l.trim_start().starts_with("{\"action\":\"land\"")));

    let report = dir.path().join("random.json");
    let out = harvest(&["eval", "--config", &config, "--policy", "random", "--episodes", "4", "--out", s(&report)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["aggregate"]["episodes"], 4);
}

#[test]
fn shadow_writes_one_field_per_device_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[map]\nname = \"toy\"\n");
    let out_path = dir.path().join("toy.shadow");
    let out = harvest(&["shadow", "--config", &config, "--out", s(&out_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fields = ShadowField::read_all(&mut std::fs::File::open(&out_path).unwrap()).unwrap();
    let map = load_map(TOY_MAP).unwrap();
    assert_eq!(fields.len(), map.device_cells().len());
    assert!(fields.iter().all(|f| f.map_hash == map.content_hash()));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x");
    let bad = write_config(dir.path(), "[train]\ngamma = 2.0\n");
    assert_eq!(code(&harvest(&["train", "--config", &bad, "--out", s(&out_path)])), 1);
    let typo = write_config(dir.path(), "[train]\ngama = 0.9\n");
    assert_eq!(code(&harvest(&["eval", "--config", &typo, "--policy", "random", "--out", s(&out_path)])), 1);
    assert_eq!(code(&harvest(&["eval", "--config", "/nonexistent.toml", "--out", s(&out_path)])), 1);
    assert_eq!(code(&harvest(&["train", "--bogus"])), 1);
    // Greedy evaluation without a checkpoint is a usage error.
    let ok = write_config(dir.path(), TINY);
    assert_eq!(code(&harvest(&["eval", "--config", &ok, "--out", s(&out_path)])), 1);
    // A checkpoint that cannot be read is a runtime failure.
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(code(&harvest(&["eval", "--config", &ok, "--checkpoint", s(&junk), "--out", s(&out_path)])), 2);
    // Unwritable output is a runtime failure.
    assert_eq!(
        code(&harvest(&["rollout", "--config", &ok, "--policy", "hover", "--out", "/nonexistent/dir/t.json"])),
        2
    );
    assert_eq!(code(&harvest(&["--help"])), 0);
}
