//! End-to-end exercise of the command-line interface on a tiny synthetic
//! experiment: every verb, the dependency-order errors, the --force gate,
//! the JSON output mode and the accuracy-floor exit code.

use std::path::Path;
use std::process::{Command, Output};

fn camfprint(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camfprint"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_cli_flow_on_tiny_synthetic_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // missing dresden root fails loudly
    let out = camfprint(dir, &["ingest", "--dresden", "/no/such/root"]);
    assert!(!out.status.success());

    // phase 2 before anything exists names the missing prerequisite
    let out = camfprint(dir, &["train", "--phase", "2"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ingest"), "stderr: {}", stderr(&out));

    // synthetic ingest: 4 devices x 8 images at 32x32
    let out = camfprint(
        dir,
        &[
            "ingest", "--synthetic", "--devices", "4", "--per-device", "8",
            "--image-size", "32", "--scene-pool", "2",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("4 devices"));
    assert!(stdout(&out).contains("32 images"));
    assert!(dir.join("manifest.json").exists());

    // phase 2 still refuses: phase 1 checkpoint missing
    let out = camfprint(dir, &["train", "--phase", "2"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("phase 1"), "stderr: {}", stderr(&out));

    let out = camfprint(
        dir,
        &["train", "--phase", "1", "--epochs", "2", "--stop-epoch", "2", "--batch-size", "8"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("phase1.ckpt").exists());
    assert!(dir.join("phase1_log.jsonl").exists());

    // refusing to recompute without --force
    let out = camfprint(dir, &["train", "--phase", "1", "--epochs", "2", "--stop-epoch", "2"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--force"), "stderr: {}", stderr(&out));

    let out = camfprint(dir, &["extract"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("sigs.store").exists());

    let out = camfprint(
        dir,
        &["train", "--phase", "2", "--epochs", "3", "--pair-sampling", "balanced"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("pairs.bin").exists());
    assert!(dir.join("phase2.ckpt").exists());
    assert!(dir.join("threshold.json").exists());

    // match an image against itself: valid score, verdict consistent with eta
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
            .unwrap();
    let img = manifest["records"][0]["path"].as_str().unwrap();
    let out = camfprint(dir, &["--json", "match", img, img]);
    assert!(out.status.success(), "{}", stderr(&out));
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let score = result["score"].as_f64().unwrap();
    let eta = result["eta"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&score));
    assert_eq!(result["same_device"].as_bool().unwrap(), score >= eta);
    let out = camfprint(dir, &["match", img, img]);
    assert!(stdout(&out).contains("SAME") || stdout(&out).contains("DIFFERENT"));

    // undecodable image input
    let bad = dir.join("bad.png");
    std::fs::write(&bad, b"junk").unwrap();
    let out = camfprint(dir, &["match", bad.to_str().unwrap(), img]);
    assert!(!out.status.success());

    // evaluation: 10 pairs per cell -> every cell a multiple of 0.1
    let out = camfprint(dir, &["evaluate", "--n-pairs", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("eval/report.json").exists());
    assert!(dir.join("eval/heatmap.png").exists());
    let csv = std::fs::read_to_string(dir.join("eval/matrix.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert!((v * 10.0 - (v * 10.0).round()).abs() < 1e-9, "cell {v}");
        }
    }

    // accuracy floor: an untrained tiny model will not reach 1.01
    let out = camfprint(dir, &["evaluate", "--n-pairs", "10", "--min-accuracy", "1.01"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));

    // plot re-renders the heatmap deterministically
    let before = std::fs::read(dir.join("eval/heatmap.png")).unwrap();
    std::fs::remove_file(dir.join("eval/heatmap.png")).unwrap();
    let out = camfprint(dir, &["plot"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(dir.join("eval/heatmap.png")).unwrap(), before);
}

#[test]
fn output_dir_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_camfprint"))
        .env("CAMFPRINT_OUTPUT_DIR", tmp.path())
        .args([
            "ingest", "--synthetic", "--devices", "2", "--per-device", "4",
            "--image-size", "16",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("manifest.json").exists());
    assert!(tmp.path().join("synthetic").exists());
}
