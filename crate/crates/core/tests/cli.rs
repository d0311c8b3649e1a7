mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{clip_fixture, noise, write_mono, FS};
use sv2a_core::audio::{read_wav, WavContents};
use sv2a_core::flow::load_checkpoint;

fn sv2a(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sv2a")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_and_usage_errors() {
    let o = sv2a(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["preprocess", "render", "metrics", "features", "cfm-train", "cfm-sample", "validate"] {
        assert!(stdout(&o).contains(cmd), "{cmd} missing from help");
        assert_eq!(sv2a(&[cmd, "--help"]).status.code(), Some(0));
    }
    assert_eq!(sv2a(&["--version"]).status.code(), Some(0));
    assert_eq!(sv2a(&[]).status.code(), Some(2));
    assert_eq!(sv2a(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sv2a(&["render", "--order", "two"]).status.code(), Some(2));
    assert_eq!(sv2a(&["render"]).status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_sv2a"))
        .args(["validate", "missing.json"])
        .env("SV2A_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_file_render_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    write_mono(&input, noise(FS as usize, 1));
    let out_dir = dir.path().join("out");
    std::fs::create_dir(&out_dir).unwrap();
    let left = out_dir.join("left.wav");
    let o = sv2a(&["render", "--input", p(&input), "--output", p(&left), "--azimuth-deg", "90"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let WavContents::Stereo(b) = read_wav(&left).unwrap() else {
        panic!("expected stereo output");
    };
    assert_eq!(b.len(), FS as usize);
    assert!(b.left().energy() > b.right().energy());

    let traj = dir.path().join("t.csv");
    common::write_trajectory(&traj, &[(0.0, -90.0), (0.5, 90.0)]);
    let moving = out_dir.join("moving.wav");
    let o = sv2a(&["render", "--input", p(&input), "--output", p(&moving), "--trajectory", p(&traj), "--pcm16"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = sv2a(&["metrics", p(&out_dir)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,mean,count");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("iacc,") && lines[1].ends_with(",2"));
}

#[test]
fn metrics_without_stereo_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    write_mono(&dir.path().join("mono.wav"), noise(8000, 2));
    assert_eq!(sv2a(&["metrics", p(dir.path())]).status.code(), Some(1));
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(sv2a(&["metrics", p(&empty)]).status.code(), Some(1));
}

#[test]
fn batch_pipeline_with_a_bad_clip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = clip_fixture(dir.path(), 1.0);
    let mut text = std::fs::read_to_string(&manifest).unwrap();
    text = text.replace(
        "\n]",
        ",\n  {\"id\": \"broken\", \"audio\": \"a.wav\", \"heatmap\": \"nope.hmap\"}\n]",
    );
    std::fs::write(&manifest, text).unwrap();

    let o = sv2a(&["validate", p(&manifest)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("broken: heatmap"));

    let out = dir.path().join("render");
    let o = sv2a(&["render", "--manifest", p(&manifest), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    for id in ["a", "b", "c", "d"] {
        assert!(out.join(format!("{id}_binaural.wav")).exists());
    }
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("render_log.json")).unwrap()).unwrap();
    assert_eq!(log["rendered"], 4);
    assert_eq!(log["failed"], 1);
    assert_eq!(log["clips"][3]["direction_source"], "trajectory");
    assert_eq!(log["clips"][4]["id"], "broken");

    let o = sv2a(&["render", "--manifest", p(&manifest), "--out", p(&out), "--strict"]);
    assert_eq!(o.status.code(), Some(1));

    let feats = dir.path().join("features");
    let o = sv2a(&["features", "--manifest", p(&manifest), "--out", p(&feats)]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(feats.join("a_features.csv")).unwrap();
    assert!(csv.starts_with("frame,s_h,s_area,s_var,s_lr,s_shape\n"));
    assert_eq!(csv.lines().count(), 26);
    assert!(!feats.join("c_features.csv").exists());

    let single = dir.path().join("b.csv");
    let o = sv2a(&["features", p(&dir.path().join("b.hmap")), "--out", p(&single)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&single).unwrap(), std::fs::read_to_string(feats.join("b_features.csv")).unwrap());
}

#[test]
fn preprocess_writes_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    write_mono(&dir.path().join("long.wav"), noise(11 * FS as usize, 3));
    write_mono(&dir.path().join("short.wav"), noise(2 * FS as usize, 4));
    std::fs::write(dir.path().join("garbage.wav"), b"not audio").unwrap();
    let manifest = dir.path().join("m.json");
    std::fs::write(
        &manifest,
        r#"[{"id": "long", "audio": "long.wav"}, {"id": "short", "audio": "short.wav"},
            {"id": "garbage", "audio": "garbage.wav"}]"#,
    )
    .unwrap();
    let kept = dir.path().join("kept.json");
    let report = dir.path().join("report.json");
    let args = ["preprocess", "--manifest", p(&manifest), "--out", p(&kept), "--report", p(&report)];
    let o = sv2a(&args);
    assert_eq!(o.status.code(), Some(0));
    let kept_json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&kept).unwrap()).unwrap();
    assert_eq!(kept_json.as_array().unwrap().len(), 1);
    assert_eq!(kept_json[0]["id"], "long");
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!((r["kept"].as_u64(), r["rejected_short"].as_u64()), (Some(1), Some(1)));
    assert_eq!(r["rejected_unreadable"], 1);
    assert_eq!(r["clips"][2]["status"], "rejected_unreadable");

    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(sv2a(&strict).status.code(), Some(1));

    let missing = dir.path().join("nope.json");
    assert_eq!(sv2a(&["preprocess", "--manifest", p(&missing), "--out", p(&kept)]).status.code(), Some(1));
}

#[test]
fn train_then_sample() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let trace = dir.path().join("loss.csv");
    let o = sv2a(&[
        "cfm-train", "--steps", "300", "--batch-size", "32", "--lr", "1e-2", "--out", p(&ckpt), "--trace", p(&trace),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let model = load_checkpoint(&ckpt).unwrap();
    assert_eq!((model.dim(), model.cond_dim()), (1, 0));
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("step,loss\n1,"));
    assert_eq!(trace.lines().count(), 301);

    let samples = dir.path().join("s.csv");
    let o = sv2a(&["cfm-sample", "--checkpoint", p(&ckpt), "--count", "200", "--out", p(&samples)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&samples).unwrap();
    assert!(text.starts_with("sample,channel,x0\n"));
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 400);
    let mean = values.iter().sum::<f64>() / 400.0;
    assert!((mean - 3.0).abs() < 0.6, "{mean}");

    let o = sv2a(&["cfm-sample", "--checkpoint", p(&ckpt), "--cond", "1,2", "--out", p(&samples)]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(&ckpt, b"SV2Ajunk").unwrap();
    let o = sv2a(&["cfm-sample", "--checkpoint", p(&ckpt), "--out", p(&samples)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shared_weights_and_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.json");
    std::fs::write(
        &data,
        r#"[{"left": [1.0, -1.0], "right": [0.5, 0.0], "cond": [0.0]},
            {"left": [-1.0, 1.0], "right": [0.0, 0.5], "cond": [1.0]}]"#,
    )
    .unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let o = sv2a(&["cfm-train", "--data", p(&data), "--shared", "--steps", "20", "--out", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let model = load_checkpoint(&ckpt).unwrap();
    assert_eq!((model.dim(), model.cond_dim(), model.nets().len()), (2, 1, 1));
    let samples = dir.path().join("s.csv");
    let o = sv2a(&["cfm-sample", "--checkpoint", p(&ckpt), "--cond", "1", "--count", "3", "--out", p(&samples)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&samples).unwrap().lines().count(), 7);
}
