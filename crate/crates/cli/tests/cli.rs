use std::path::Path;
use std::process::{Command, Output};

fn graspmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graspmap"))
        .args(args)
        .env("GRASPMAP_THREADS", "1")
        .output()
        .expect("spawn graspmap")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&graspmap(&["--help"])), 0);
    assert_eq!(code(&graspmap(&["--version"])), 0);
    assert_eq!(code(&graspmap(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&graspmap(&[])), 1);
    assert_eq!(code(&graspmap(&["frobnicate"])), 1);
    assert_eq!(code(&graspmap(&["synth", "--count", "x", "--out-dir", "d"])), 1);
    let o = graspmap(&["evaluate", "--model", "", "--data", "d"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn io_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let o = graspmap(&["evaluate", "--model", s(&missing), "--data", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.bin"));

    let corrupt = dir.path().join("bad.bin");
    std::fs::write(&corrupt, b"GRASPFCN but not really a weight file").unwrap();
    let o = graspmap(&["evaluate", "--model", s(&corrupt), "--data", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn convert_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("cornell");
    std::fs::create_dir_all(&src).unwrap();
    std::fs::write(src.join("pcd0100.txt"), "not a point cloud").unwrap();
    let o = graspmap(&["convert", "--cornell-dir", s(&src), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pcd0100"));
}

#[test]
fn synth_train_evaluate_sweep_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = graspmap(&["synth", "--count", "6", "--size", "96", "--seed", "4", "--out-dir", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("manifest.jsonl").is_file());

    let model = dir.path().join("model.bin");
    let report = dir.path().join("report.jsonl");
    let history = dir.path().join("loss.txt");
    let o = graspmap(&[
        "train", "--data", s(&data), "--preset", "desk", "--folds", "2", "--epochs", "2", "--batch", "3",
        "--out-model", s(&model), "--report", s(&report), "--loss-history", s(&history), "--omit-timing",
    ]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(code(&o), 0, "{err}");
    assert!(err.contains("epochs=2 batch=3 lr=0.001 loss_weights=5,3,4"), "{err}");
    let lines: Vec<String> = std::fs::read_to_string(&report).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| !l.contains("inference")));
    assert_eq!(std::fs::read_to_string(&history).unwrap().lines().count(), 2);

    let o = graspmap(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("accuracy "));

    let o = graspmap(&["sweep", "--model", s(&model), "--data", s(&data), "--jaccard", "0.25,0.3,0.35,0.4"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0);
    assert!(out.contains("non-increasing: yes"), "{out}");
    let o = graspmap(&["sweep", "--model", s(&model), "--data", s(&data), "--jaccard", "0.4,0.3"]);
    assert_eq!(code(&o), 2);
    let o = graspmap(&["sweep", "--model", s(&model), "--data", s(&data), "--topk", "1,2,3", "--q-threshold", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);

    let input = data.join("synth-4-00000d.png");
    let overlay = dir.path().join("overlay.png");
    let maps = dir.path().join("maps");
    let o = graspmap(&[
        "predict", "--model", s(&model), "--input", s(&input), "--num-grasps", "3", "--q-threshold", "0",
        "--out-overlay", s(&overlay), "--out-maps", s(&maps),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let grasps: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(!grasps.is_empty() && grasps.len() <= 3, "{out}");
    assert!(grasps.iter().all(|l| l.split_whitespace().count() == 5));
    for f in ["quality.png", "angle.png", "width.png"] {
        assert!(maps.join(f).is_file(), "{f}");
    }
    let img = image::open(&overlay).unwrap();
    assert_eq!((img.width(), img.height()), (96, 96));
}

#[test]
fn predict_resizes_other_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&graspmap(&["synth", "--count", "2", "--size", "128", "--out-dir", s(&data)])), 0);
    let model = dir.path().join("m.bin");
    let o = graspmap(&[
        "train", "--data", s(&data), "--preset", "desk", "--folds", "1", "--epochs", "1", "--batch", "2",
        "--no-augment", "--out-model", s(&model), "--report", s(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let grasps = dir.path().join("g.txt");
    let out = dir.path().join("out");
    let a = data.join("synth-0-00000d.png");
    let b = data.join("synth-0-00001d.png");
    let o = graspmap(&[
        "predict", "--model", s(&model), "--input", s(&a), s(&b), "--q-threshold", "0",
        "--out-overlay", s(&out), "--out-maps", s(&out), "--out-grasps", s(&grasps),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("synth-0-00000d_overlay.png").is_file());
    assert!(out.join("synth-0-00001d_maps/quality.png").is_file());
    let text = std::fs::read_to_string(&grasps).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn divergent_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&graspmap(&["synth", "--count", "4", "--out-dir", s(&data)])), 0);
    let o = graspmap(&[
        "train", "--data", s(&data), "--folds", "1", "--epochs", "3", "--batch", "2", "--lr", "1e38",
        "--out-model", s(&dir.path().join("m.bin")), "--report", s(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("m.bin").exists());
}
