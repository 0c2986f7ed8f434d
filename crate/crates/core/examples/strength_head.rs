//! Fits the strength head on renders of the LED fixture (all views, seven
//! levels, three rigs) and predicts strength under an unseen rig and seed.
//!
//! cargo run --release --example strength_head

use emberforge::fixtures;
use emberforge::render::{render_asset, render_view_in_scene, sample_rigs, RenderConfig, Scene};
use emberforge::strength::{predict_strength, train_head, HeadTrainConfig, StatFeatures};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let asset = fixtures::led_panel_wall();
    let scene = Scene::new(&asset)?;
    let cfg = RenderConfig { resolution: 32, samples_per_pixel: 4, seed: 5, ..Default::default() };
    let levels = [1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0];
    let train = render_asset(&asset, &levels, &sample_rigs(&scene, 3, 5), &cfg)?;
    let head = train_head(train.iter().map(|v| (&v.beauty, v.strength)), &StatFeatures, &HeadTrainConfig::default())?;

    let test_cfg = RenderConfig { seed: 99, ..cfg.clone() };
    let rig = sample_rigs(&scene, 1, 1234).remove(0);
    for s in [1.25, 2.0, 2.5] {
        let mut preds = Vec::new();
        for v in test_cfg.views_for(&scene) {
            let img = render_view_in_scene(&scene, &v, &rig, s, &test_cfg)?.beauty;
            preds.push(predict_strength(&img, &StatFeatures, &head)?);
        }
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        println!("true {s:.2}  mean prediction over {} views {mean:.3}", preds.len());
    }
    Ok(())
}
