use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avfield::dataio::write_wav;
use avfield::simulator::SceneSpec;
use avfield_cli::lock::LOCK_FILE;

fn avfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avfield"))
        .args(args)
        .arg("-q")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene(dir: &Path) -> PathBuf {
    let scene = SceneSpec {
        clip_seconds: 0.2,
        ..SceneSpec::default()
    };
    let p = dir.join("scene.json");
    fs::write(&p, scene.to_json().unwrap()).unwrap();
    p
}

fn gen(dir: &Path, name: &str, n: usize) -> PathBuf {
    let out = dir.join(name);
    let scene = small_scene(dir);
    let o = avfield(&["gen-data", "--scene", s(&scene), "--n", &n.to_string(), "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_splits_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a", 10);
    let b = gen(dir.path(), "b", 10);
    let o = avfield(&["gen-data", "--scene", s(&small_scene(dir.path())), "--n", "10", "--seed", "4", "--out", s(&dir.path().join("c"))]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "8 train / 2 val samples");
    assert_eq!(tree(&a), tree(&b));
    assert!(!a.join(LOCK_FILE).exists());
}

#[test]
fn bad_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"sample_rate": "fast"}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(avfield(&["gen-data", "--scene", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    let missing = dir.path().join("nope").join("checkpoint.json");
    let o = avfield(&["eval", "--checkpoint", s(&missing), "--data", s(&out), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("avfield: "));
    assert_eq!(avfield(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn busy_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("busy");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(LOCK_FILE), "1").unwrap();
    let o = avfield(&["gen-data", "--scene", s(&small_scene(dir.path())), "--n", "10", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}

#[test]
fn train_eval_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data", 10);
    let run = dir.path().join("run");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 5, "anerf": {"width": 8}}"#).unwrap();
    let o = avfield(&["train", "--data", s(&data), "--out", s(&run), "--config", s(&cfg), "--epochs", "2", "--batch-size", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let written: serde_json::Value = serde_json::from_slice(&fs::read(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["epochs"], 2);
    assert_eq!(written["batch_size"], 4);
    assert_eq!(written["anerf"]["width"], 8);
    let ckpt: serde_json::Value = serde_json::from_slice(&fs::read(run.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ckpt["meta"]["epochs_completed"], 2);
    let curve = fs::read_to_string(run.join("train_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);

    let report = dir.path().join("eval");
    let o = avfield(&["eval", "--checkpoint", s(&run.join("checkpoint.json")), "--data", s(&data), "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(report.join("metrics.csv")).unwrap();
    for label in ["model", "mono_mono", "mono_energy", "stereo_energy"] {
        assert!(csv.lines().any(|l| l.starts_with(label)), "{label} missing from\n{csv}");
    }

    let poses = dir.path().join("poses.json");
    fs::write(&poses, r#"[{"x": 1.5, "y": 0.0, "z": 1.2, "theta": 3.14, "phi": 0.0}, {"x": 2.0, "y": 0.5, "z": 1.2, "theta": 3.0, "phi": 0.0}]"#).unwrap();
    let wav = dir.path().join("source.wav");
    let clip: Vec<f64> = (0..4410).map(|i| 0.1 * (i as f64 * 0.07).sin()).collect();
    write_wav(&wav, &[clip], 22050).unwrap();
    let traj = dir.path().join("traj");
    let ck = run.join("checkpoint.json");
    let args = ["render-trajectory", "--checkpoint", s(&ck), "--poses", s(&poses), "--source", s(&wav), "--out", s(&traj)];
    let o = avfield(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(traj.join("frame_0000.wav").exists() && traj.join("frame_0001.wav").exists());
    let rows = fs::read_to_string(traj.join("trajectory.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("index,x,y,z,theta,phi,left_rms,right_rms,energy"));
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn zero_epochs_store_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data", 10);
    let runs: Vec<PathBuf> = ["r1", "r2"].iter().map(|r| dir.path().join(r)).collect();
    for r in &runs {
        let o = avfield(&["train", "--data", s(&data), "--out", s(r), "--epochs", "0", "--width", "8", "--seed", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(runs[0].join("checkpoint.json")).unwrap();
    assert_eq!(a, fs::read(runs[1].join("checkpoint.json")).unwrap());
    let ckpt: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(ckpt["meta"]["epochs_completed"], 0);
    assert_eq!(fs::read_to_string(runs[0].join("train_curve.csv")).unwrap().lines().count(), 1);
}

#[test]
fn empty_pose_list_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data", 10);
    let run = dir.path().join("run");
    assert!(avfield(&["train", "--data", s(&data), "--out", s(&run), "--epochs", "0", "--width", "8"]).status.success());
    let poses = dir.path().join("poses.json");
    fs::write(&poses, "[]").unwrap();
    let traj = dir.path().join("traj");
    let o = avfield(&["render-trajectory", "--checkpoint", s(&run.join("checkpoint.json")), "--poses", s(&poses), "--out", s(&traj)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!traj.exists());

    fs::write(&poses, r#"[{"x": 1}]"#).unwrap();
    let o = avfield(&["render-trajectory", "--checkpoint", s(&run.join("checkpoint.json")), "--poses", s(&poses), "--out", s(&traj)]);
    assert_eq!(o.status.code(), Some(2));
}
