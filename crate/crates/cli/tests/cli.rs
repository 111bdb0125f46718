use std::fs;
use std::process::Command;

fn geoseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geoseg"))
}

#[test]
fn default_config_parses_back() {
    let out = geoseg().arg("default-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("patch_size = 100"));
    assert!(text.contains("kernel_size = 5"));
}

#[test]
fn missing_upstream_fails_with_the_file_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "stride = 2\n").unwrap();
    let out = geoseg()
        .args(["refine", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("svm.txt") && err.contains("train-svm"),
        "{err}"
    );
}

#[test]
fn invalid_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "").unwrap();
    let out = geoseg()
        .args(["synth", "--stride", "0", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("`stride`"));
}

#[test]
fn synth_writes_scenes_under_the_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(
        &cfg,
        "patch_size = 34\nsynth.scenes = 2\nsynth.train_scenes = 1\nsynth.width = 200\nsynth.height = 200\n",
    )
    .unwrap();
    let out = geoseg()
        .args(["synth", "--seed", "3", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("data/train/scene_00_depth.png").exists());
    assert!(dir.path().join("data/test/scene_01_labels.png").exists());
    let manifest = fs::read_to_string(dir.path().join("run/manifest.txt")).unwrap();
    assert!(manifest.contains("stage.synth = done"));
}
