#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMALL_CONFIG: &str = r#"{
  "render": {"resolution": 32, "samples_per_pixel": 4},
  "bake": {"texture_resolution": 64},
  "seed": 3
}"#;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emberforge"))
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.glb"))
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr:\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs curate → render → select → bake → evaluate on the LED-panel
/// fixture inside `dir`, with all outputs under `dir/out`.
pub fn run_pipeline(dir: &Path, jobs: usize) {
    std::fs::write(dir.join("cfg.json"), SMALL_CONFIG).unwrap();
    let led = fixture("led_panel_wall");
    let led = led.to_str().unwrap();
    let fixtures_dir = Path::new(led).parent().unwrap().to_str().unwrap().to_string();
    let j = jobs.to_string();
    let common = ["--config", "cfg.json", "--jobs", &j];
    let steps: Vec<Vec<&str>> = vec![
        vec!["curate", "--in", &fixtures_dir, "--out", "out/curated.jsonl"],
        vec!["render", "--asset", led, "--strengths", "1.0,2.0,3.0", "--rigs", "2", "--out", "out/renders"],
        vec!["select", "--renders", "out/renders/led_panel_wall", "--out", "out/selection.json"],
        vec!["bake", "--mesh", led, "--views", "out/renders/led_panel_wall", "--strength", "2.0", "--out", "out/baked.glb"],
        vec!["evaluate", "--pred", "out/baked.glb", "--gt", led, "--out", "out/report.json"],
        vec!["evaluate", "--pred", led, "--gt", led, "--out", "out/self_report.json"],
    ];
    for s in steps {
        let args: Vec<&str> = common.iter().copied().chain(s).collect();
        assert_ok(&run_in(dir, &args));
    }
}
