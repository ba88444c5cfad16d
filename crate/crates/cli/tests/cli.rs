use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfgrasp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn pcfgrasp")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// scenegen → view → complete → init → features → propose in `dir`.
fn pipeline(dir: &Path, model: &str) {
    ok(dir, &["scenegen", "--out", "scene.json", "--seed", "5", "--labels", "400"]);
    ok(dir, &["view", "--scene", "scene.json", "--out", "view.ply", "--seed", "6"]);
    ok(dir, &["complete", "--input", "view.ply", "--out", "comp.ply", "--method", "mirror"]);
    ok(dir, &["init", "--out", "model.ckpt", "--model", model, "--seed", "7"]);
    ok(dir, &["features", "--input", "view.ply", "--completion", "comp.ply", "--checkpoint", "model.ckpt", "--out", "f.bin"]);
    ok(dir, &["propose", "--input", "view.ply", "--features", "f.bin", "--checkpoint", "model.ckpt", "--out", "grasps.json", "--seed", "7"]);
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, "full");
    std::fs::write(
        d.join("frame.json"),
        r#"{"origin":[0,0,0],"z_axis":[0,-1,0],"R_cr":[[1,0,0],[0,1,0],[0,0,1]]}"#,
    )
    .unwrap();
    ok(d, &["filter", "--grasps", "grasps.json", "--frame", "frame.json", "--out", "filtered.json"]);
    ok(d, &["eval", "--grasps", "filtered.json", "--scene", "scene.json", "--view", "view.view.json", "--cloud", "view.ply", "--out", "metrics.json"]);

    let proposals = json(&d.join("grasps.json"));
    let grasps = proposals["grasps"].as_array().unwrap();
    assert!(!grasps.is_empty() && grasps.len() <= 1024);
    assert_eq!(proposals["provenance"]["seed"], 7);
    assert_eq!(proposals["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(proposals["provenance"]["git_describe"].is_string());
    for g in grasps {
        let r = g["R"].as_array().unwrap();
        assert_eq!(r.len(), 3);
        let s = g["score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&s));
    }

    let filtered = json(&d.join("filtered.json"));
    let fg = filtered["grasps"].as_array().unwrap();
    assert_eq!(fg.len(), grasps.len());
    let scores: Vec<f64> = fg.iter().map(|g| g["filtered_score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(fg.iter().all(|g| g["score"].is_number() && g["direction_score"].is_number()));

    let m = json(&d.join("metrics.json"));
    for key in ["precision_at_k", "coverage", "collision_rate"] {
        let v = m[key].as_f64().unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert_eq!(m["labels"], 400);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path(), "reduced");
    pipeline(b.path(), "reduced");
    for f in ["scene.json", "scene.labels.json", "view.ply", "view.view.json", "comp.ply", "model.ckpt", "f.bin", "grasps.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    ok(b.path(), &["scenegen", "--out", "other.json", "--seed", "6", "--labels", "400"]);
    assert_ne!(std::fs::read(b.path().join("other.json")).unwrap(), std::fs::read(b.path().join("scene.json")).unwrap());
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["scenegen", "--out", "s.json", "--labels", "10"]);
    ok(d, &["view", "--scene", "s.json", "--out", "v.ply"]);
    ok(d, &["init", "--out", "m.ckpt", "--model", "reduced"]);
    ok(d, &["features", "--input", "v.ply", "--completion", "v.ply", "--checkpoint", "m.ckpt", "--out", "f.bin"]);
    for args in [
        vec!["propose", "--input", "v.ply", "--features", "f.bin", "--checkpoint", "nope.ckpt", "--out", "g.json"],
        vec!["features", "--input", "v.ply", "--completion", "v.ply", "--checkpoint", "nope.ckpt", "--out", "f2.bin"],
    ] {
        let out = run(d, &args);
        assert_eq!(out.status.code(), Some(1));
        let text = String::from_utf8(out.stderr).unwrap();
        let err: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(err["code"], "CHECKPOINT_MISSING");
        assert!(err["message"].as_str().unwrap().contains("nope.ckpt"));
    }
    assert!(!d.join("g.json").exists());
}

#[test]
fn errors_are_single_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["scenegen"],
        vec!["bench", "nope"],
        vec!["bench", "fps", "--threads", "4"],
        vec!["frobnicate"],
        vec!["view", "--scene", "missing.json", "--out", "v.ply"],
    ] {
        let out = run(dir.path(), &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let text = String::from_utf8(out.stderr).unwrap();
        let last = text.lines().last().unwrap();
        let v: Value = serde_json::from_str(last).unwrap_or_else(|_| panic!("not JSON: {last}"));
        assert!(v["code"].is_string() && v["message"].is_string());
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "# scene\nout = from_file.json\nseed = 9\nlabels = 12\n").unwrap();
    ok(d, &["--config", "run.cfg", "scenegen"]);
    assert_eq!(json(&d.join("from_file.json"))["labels"].as_array().unwrap().len(), 12);
    ok(d, &["--config", "run.cfg", "scenegen", "--labels", "3", "--out", "flag.json"]);
    assert_eq!(json(&d.join("flag.json"))["labels"].as_array().unwrap().len(), 3);
    assert!(d.join("flag.labels.json").is_file());
}

#[test]
fn train_writes_metrics_and_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, "reduced");
    ok(d, &[
        "train", "--scene", "scene.json", "--view", "view.view.json", "--input", "view.ply", "--completion", "comp.ply",
        "--checkpoint", "model.ckpt", "--out", "trained.ckpt", "--steps", "3", "--lr", "1e-3",
    ]);
    let text = std::fs::read_to_string(d.join("trained.ckpt.metrics.jsonl")).unwrap();
    let recs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 3);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r["step"], i as u64);
        for k in ["l_bce", "l_adds", "l_width", "l_total"] {
            assert!(r[k].as_f64().unwrap().is_finite());
        }
    }
    assert!(d.join("trained.ckpt.model.json").is_file());
    ok(d, &["propose", "--input", "view.ply", "--features", "f.bin", "--checkpoint", "trained.ckpt", "--out", "g2.json"]);
    assert_ne!(std::fs::read(d.join("g2.json")).unwrap(), std::fs::read(d.join("grasps.json")).unwrap());

    let out = run(d, &["train", "--scene", "scene.json", "--out", "x.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_record_has_the_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["bench", "fps", "--n", "4000", "--m", "256", "--repeats", "10", "--out", "b.json"]);
    let b = json(&dir.path().join("b.json"));
    for k in ["kernel", "n", "params", "repeats", "mean_ms", "p95_ms", "threads", "hardware"] {
        assert!(!b[k].is_null(), "missing {k}");
    }
    assert_eq!(b["kernel"], "fps");
    assert_eq!(b["n"], 4000);
    assert_eq!(b["params"]["m"], 256);
    assert!(b["repeats"].as_u64().unwrap() >= 10);
    ok(dir.path(), &["bench", "query_ball", "--n", "2000", "--m", "100", "--out", "q.json"]);
    assert_eq!(json(&dir.path().join("q.json"))["kernel"], "query_ball");
    let out = run(dir.path(), &["bench", "fps", "--repeats", "3"]);
    assert_eq!(out.status.code(), Some(1));
}
