//! Renders the LED panel fixture at two strengths under one sampled rig and
//! writes the pass set plus a tonemapped front view.
//!
//! cargo run --release --example render_views -- [OUT_DIR]

use std::path::PathBuf;

use emberforge::asset::write_png_tonemapped;
use emberforge::fixtures;
use emberforge::render::{render_asset, sample_rigs, write_render_set, RenderConfig, Scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("emberforge_renders"));
    let asset = fixtures::led_panel_wall();
    let cfg = RenderConfig { resolution: 96, samples_per_pixel: 8, ..Default::default() };
    let rigs = sample_rigs(&Scene::new(&asset)?, 1, cfg.seed);
    let views = render_asset(&asset, &[1.0, 3.0], &rigs, &cfg)?;
    let manifest = write_render_set(&out, &asset.id, &views, &rigs, &cfg)?;
    for v in views.iter().filter(|v| v.view.name() == "front") {
        let p = out.join(format!("front_{}.png", v.strength));
        write_png_tonemapped(&v.beauty, &p)?;
        let mean: f32 = v.beauty.data().iter().sum::<f32>() / v.beauty.data().len() as f32;
        println!("{} mean radiance {mean:.4}", p.display());
    }
    println!("{} entries written under {}", manifest.entries.len(), out.join(&asset.id).display());
    Ok(())
}
