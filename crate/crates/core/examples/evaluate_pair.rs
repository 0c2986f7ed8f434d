//! Evaluates a slightly perturbed copy of the sphere fixture against the
//! original and prints the report.
//!
//! cargo run --release --example evaluate_pair

use emberforge::fixtures;
use emberforge::metrics::{evaluate, EvalProtocol};
use emberforge::render::RenderConfig;
use emberforge::strength::StatFeatures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gt = fixtures::sphere();
    let mut pred = gt.clone();
    pred.materials.albedo = gt.materials.albedo.map(|v| (v * 0.9).min(1.0));
    pred.id = "darker".into();
    let protocol = EvalProtocol {
        render: RenderConfig { resolution: 64, samples_per_pixel: 4, ..Default::default() },
        ..Default::default()
    };
    let report = evaluate(&pred, &gt, &protocol, &StatFeatures)?;
    println!("{}", serde_json::to_string_pretty(&report.aggregate)?);
    Ok(())
}
