mod common;

use common::*;
use serde_json::Value;

#[test]
fn help_lists_subcommands_and_global_flags() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["curate", "render", "select", "bake", "evaluate", "loss-check", "toy-ablate", "strength", "--config", "--seed", "--jobs", "--verbose"] {
        assert!(text.contains(word), "help lacks {word}");
    }
    let sub = bin().args(["strength", "train", "--help"]).output().unwrap();
    assert_eq!(sub.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&sub.stdout).contains("--manifest"));
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["curate", "--in", "missing/", "--out", "m.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input not found"));

    std::fs::write(dir.path().join("bad.json"), r#"{"rendr": {}}"#).unwrap();
    let out = run_in(dir.path(), &["--config", "bad.json", "loss-check", "--report", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let out = run_in(dir.path(), &["render", "--asset", "a.glb"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(dir.path(), &["toy-ablate", "--lambda", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1, "nothing but bad.json may exist");
}

#[test]
fn processing_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("renders")).unwrap();
    std::fs::write(dir.path().join("renders/manifest.json"), "{}").unwrap();
    let quad = fixture("quad");
    let out = run_in(dir.path(), &["bake", "--mesh", quad.to_str().unwrap(), "--views", "renders", "--out", "o.glb"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_pipeline_on_led_fixture() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path(), 2);
    let top: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    let mut top = top;
    top.sort();
    assert_eq!(top, ["cfg.json", "out"]);

    let curated = std::fs::read_to_string(dir.path().join("out/curated.jsonl")).unwrap();
    let led: Value = curated.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()).find(|v| v["asset_id"] == "led_panel_wall").unwrap();
    assert_eq!(led["accepted"], true);

    let sel: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/selection.json")).unwrap()).unwrap();
    assert_eq!(sel["strengths"].as_array().unwrap().len(), 3);
    assert_eq!(sel["strengths"][0]["ratios"].as_array().unwrap().len(), 10);

    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/self_report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let agg = &report["aggregate"];
    assert_eq!(agg["psnr_albedo"], 100.0);
    assert_eq!(agg["ssim_albedo"], 1.0);
    assert_eq!(agg["dice"], 1.0);
    assert!(agg["frechet_distance"].as_f64().unwrap() < 1e-8);

    let baked: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(baked["aggregate"]["strength_rmse"], 0.0);
    assert!(baked["aggregate"]["ssim_albedo"].as_f64().unwrap() > 0.9);
    let a = emberforge::asset::load_asset(&dir.path().join("out/baked.glb")).unwrap();
    assert_eq!(a.materials.emission_strength, 2.0);
}

#[test]
fn loss_check_and_toy_ablate() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(dir.path(), &["loss-check", "--seed", "4", "--report", "out/loss.json"]));
    let r: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/loss.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["seed"], 4);

    assert_ok(&run_in(dir.path(), &["toy-ablate", "--lambda", "0,0.1", "--steps", "20", "--out", "out/curves.csv"]));
    let csv = std::fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,lambda,l_mcp,l_seg,l_total"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().any(|r| r[1] == "0") && rows.iter().any(|r| r[1] == "0.1"));
    let stdout = run_in(dir.path(), &["toy-ablate", "--lambda", "0.1", "--steps", "5"]);
    assert_ok(&stdout);
    assert!(String::from_utf8_lossy(&stdout.stdout).starts_with("step,lambda"));
}

#[test]
fn strength_train_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"render": {"resolution": 24, "samples_per_pixel": 2}, "strength": {"epochs": 200}}"#).unwrap();
    let led = fixture("led_panel_wall");
    let base = ["--config", "cfg.json"];
    let run = |extra: &[&str]| run_in(dir.path(), &base.iter().chain(extra).copied().collect::<Vec<_>>());
    assert_ok(&run(&["render", "--asset", led.to_str().unwrap(), "--strengths", "1.0,3.0", "--out", "out/r"]));
    assert_ok(&run(&["strength", "train", "--manifest", "out/r/led_panel_wall/manifest.json", "--out", "out/head.json"]));
    let head: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/head.json")).unwrap()).unwrap();
    assert_eq!(head["dims"], serde_json::json!([8, 64, 32, 1]));
    let img = "out/r/led_panel_wall/0/3.0/front_beauty.exr";
    let out = run(&["strength", "predict", "--image", img, "--head", "out/head.json"]);
    assert_ok(&out);
    let s: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((1.0..=3.0).contains(&s));
    let again = run(&["strength", "predict", "--image", img, "--head", "out/head.json"]);
    assert_eq!(out.stdout, again.stdout);
}
