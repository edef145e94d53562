//! End-to-end CLI tests driving the compiled binary: synth -> train ->
//! infer -> eval, plus cost, resume, and error paths.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plainpose"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("plainpose_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn cost_reports_published_golden_numbers() {
    let out = run_ok(&[
        "cost", "--preset", "vitpose-b", "--input", "256x192", "--attention", "full", "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let params = v["params"].as_u64().unwrap() as f64;
    let flops = v["flops"].as_u64().unwrap() as f64;
    assert!((params - 86e6).abs() / 86e6 < 0.02, "{params}");
    assert!((flops - 17.1e9).abs() / 17.1e9 < 0.05, "{flops}");

    let out = run_ok(&[
        "cost", "--preset", "vitpose-b", "--input", "256x192", "--stride", "8",
        "--attention", "window", "--window", "8x8", "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let flops = v["flops"].as_u64().unwrap() as f64;
    assert!((flops - 66.31e9).abs() / 66.31e9 < 0.05, "{flops}");
}

#[test]
fn unknown_flags_exit_nonzero_with_usage() {
    let out = bin().args(["cost", "--bogus-flag"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage") || err.contains("--help"), "{err}");

    let out = bin().args(["not-a-command"]).output().unwrap();
    assert!(!out.status.success());
}

/// The whole loop at desk scale: generate data, train, infer on a training
/// image, evaluate the predictions, and resume training bitwise.
#[test]
fn synth_train_infer_eval_roundtrip() {
    let dir = tmpdir("roundtrip");
    let data_dir = dir.join("data");
    run_ok(&[
        "synth", "--n", "24", "--hw", "64x48", "--seed", "11",
        "--out", data_dir.to_str().unwrap(),
    ]);
    assert!(data_dir.join("annotations.json").exists());
    assert!(data_dir.join("images/im_000000.vtpt").exists());

    // short training run on the generated directory
    let config = dir.join("run.toml");
    write(
        &config,
        r#"
[model]
preset = "toy-m"

[train]
base_lr = 1.5e-3
weight_decay = 0.01
layer_decay = 1.0
epochs = 4
decay_epochs = [3]
batch_size = 4
steps_per_epoch = 175
seed = 7
sigma = 2.0

[data]
holdout = 4
source = "unused-overridden-below"
"#,
    );
    let out_prefix = dir.join("model");
    run_ok(&[
        "train",
        "--config", config.to_str().unwrap(),
        "--data", data_dir.to_str().unwrap(),
        "--out", out_prefix.to_str().unwrap(),
    ]);
    for ext in ["ckpt", "opt", "state.json", "log.jsonl", "summary.json"] {
        assert!(out_prefix.with_extension(ext).exists(), "{ext} missing");
    }
    // the metric log is line-delimited JSON
    let log = std::fs::read_to_string(out_prefix.with_extension("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 700);
    for line in log.lines().take(3) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["loss"].is_f64());
    }

    // infer on a training image: keypoints land within 2 px on average
    let pred_path = dir.join("pred.json");
    run_ok(&[
        "infer",
        "--config", config.to_str().unwrap(),
        "--ckpt", out_prefix.with_extension("ckpt").to_str().unwrap(),
        "--image", data_dir.join("images/im_000003.vtpt").to_str().unwrap(),
        "--image-id", "3",
        "--out", pred_path.to_str().unwrap(),
        "--dump-heatmaps", dir.join("hm").to_str().unwrap(),
    ]);
    assert!(dir.join("hm/heatmap.vtpt").exists());
    assert!(dir.join("hm/ch0.pgm").exists());

    let preds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&pred_path).unwrap()).unwrap();
    let gt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data_dir.join("annotations.json")).unwrap())
            .unwrap();
    let gt_kps = gt["annotations"][3]["keypoints"].as_array().unwrap();
    let pd_kps = preds[0]["keypoints"].as_array().unwrap();
    let mut total = 0.0;
    for j in 0..6 {
        let dx = pd_kps[3 * j].as_f64().unwrap() - gt_kps[3 * j].as_f64().unwrap();
        let dy = pd_kps[3 * j + 1].as_f64().unwrap() - gt_kps[3 * j + 1].as_f64().unwrap();
        total += (dx * dx + dy * dy).sqrt();
    }
    let mean_err = total / 6.0;
    assert!(mean_err <= 2.0, "mean keypoint error {mean_err:.3} px");

    // evaluate the single-image predictions against the matching gt subset
    let single_gt = dir.join("gt3.json");
    write(
        &single_gt,
        &serde_json::json!({
            "images": [gt["images"][3]],
            "annotations": [gt["annotations"][3]],
        })
        .to_string(),
    );
    let out = run_ok(&[
        "eval",
        "--gt", single_gt.to_str().unwrap(),
        "--pred", pred_path.to_str().unwrap(),
        "--schema", "synthetic",
        "--metric", "oks-ap",
        "--json",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["ap"].as_f64().unwrap() > 0.7, "{report}");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_resume_matches_uninterrupted_run() {
    let dir = tmpdir("resume");
    let config = dir.join("run.toml");
    write(
        &config,
        r#"
[model]
preset = "toy-s"

[train]
base_lr = 2e-3
weight_decay = 0.01
layer_decay = 1.0
epochs = 2
decay_epochs = []
batch_size = 2
steps_per_epoch = 5
seed = 9
sigma = 2.0

[data]
source = "synthetic"
n = 12
holdout = 2
seed = 4
"#,
    );
    let full = dir.join("full");
    run_ok(&["train", "--config", config.to_str().unwrap(), "--out", full.to_str().unwrap()]);

    let half_cfg = dir.join("half.toml");
    write(
        &half_cfg,
        &std::fs::read_to_string(&config).unwrap().replace("epochs = 2", "epochs = 1"),
    );
    let half = dir.join("half");
    run_ok(&["train", "--config", half_cfg.to_str().unwrap(), "--out", half.to_str().unwrap()]);
    let resumed = dir.join("resumed");
    run_ok(&[
        "train",
        "--config", config.to_str().unwrap(),
        "--resume", half.to_str().unwrap(),
        "--out", resumed.to_str().unwrap(),
    ]);
    let a = std::fs::read(full.with_extension("ckpt")).unwrap();
    let b = std::fs::read(resumed.with_extension("ckpt")).unwrap();
    assert_eq!(a, b, "resumed checkpoint differs from the uninterrupted run");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn distill_produces_a_student_with_the_token() {
    let dir = tmpdir("distill");
    let teacher_cfg = dir.join("teacher.toml");
    write(
        &teacher_cfg,
        r#"
[model]
preset = "toy-s"

[train]
base_lr = 2e-3
weight_decay = 0.01
layer_decay = 1.0
epochs = 2
decay_epochs = []
batch_size = 4
steps_per_epoch = 50
seed = 3
sigma = 2.0

[data]
source = "synthetic"
n = 32
holdout = 8
seed = 500
"#,
    );
    let teacher = dir.join("teacher");
    run_ok(&["train", "--config", teacher_cfg.to_str().unwrap(), "--out", teacher.to_str().unwrap()]);

    let student_cfg = dir.join("student.toml");
    write(
        &student_cfg,
        r#"
[model]
preset = "toy-s"
depth = 1
embed_dim = 8
num_heads = 2
"#,
    );
    let student = dir.join("student");
    run_ok(&[
        "distill",
        "--teacher-config", teacher_cfg.to_str().unwrap(),
        "--teacher-ckpt", teacher.with_extension("ckpt").to_str().unwrap(),
        "--student-config", student_cfg.to_str().unwrap(),
        "--mode", "tod",
        "--token-steps", "20",
        "--student-steps", "60",
        "--out", student.to_str().unwrap(),
    ]);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(student.with_extension("distill.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["holdout_mse"].as_f64().unwrap().is_finite());

    // the token rides in the checkpoint as a named entry
    let store = plainpose::io::load_checkpoint::<f32>(&student.with_extension("ckpt")).unwrap();
    assert!(store.contains("distill.token"));
    assert!(store.contains("distill.token_proj.w"));
    assert!(!store.is_trainable("distill.token").unwrap());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_pckh_on_a_head_sized_fixture() {
    let dir = tmpdir("pckh");
    // two instances; predictions displace one joint beyond 0.5 * head size
    let mut kps: Vec<f64> = Vec::new();
    for j in 0..16 {
        kps.extend([10.0 * j as f64, 40.0, 2.0]);
    }
    // head segment joints 9 (top) and 8 (neck): 20 px apart
    kps[3 * 8] = 50.0;
    kps[3 * 8 + 1] = 60.0;
    kps[3 * 9] = 50.0;
    kps[3 * 9 + 1] = 40.0;
    let gt = serde_json::json!({
        "images": [{"id": 1}],
        "annotations": [{
            "id": 1, "image_id": 1, "keypoints": kps, "bbox": [0, 0, 160, 80],
            "area": 12800.0
        }]
    });
    let mut pred_kps = kps.clone();
    pred_kps[0] += 30.0; // joint 0 misses (tolerance is 10 px)
    for t in pred_kps.iter_mut().skip(2).step_by(3) {
        *t = 1.0;
    }
    let pred = serde_json::json!([{ "image_id": 1, "keypoints": pred_kps, "score": 1.0 }]);
    write(&dir.join("gt.json"), &gt.to_string());
    write(&dir.join("pred.json"), &pred.to_string());
    let out = run_ok(&[
        "eval",
        "--gt", dir.join("gt.json").to_str().unwrap(),
        "--pred", dir.join("pred.json").to_str().unwrap(),
        "--schema", "mpii",
        "--metric", "pckh",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = v["mean"].as_f64().unwrap();
    assert!((mean - 15.0 / 16.0).abs() < 1e-9, "{v}");
    std::fs::remove_dir_all(&dir).ok();
}
