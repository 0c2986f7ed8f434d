//! Bakes the sphere fixture's albedo and emission back into UV space from
//! its ten rendered views.
//!
//! cargo run --release --example bake_roundtrip

use emberforge::bake::{bake, BakeConfig, BakeView};
use emberforge::fixtures;
use emberforge::metrics::emission_dice;
use emberforge::render::{render_aovs, RenderConfig, Scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = fixtures::sphere();
    let scene = Scene::new(&sphere)?;
    let strength = 2.0;
    let views = RenderConfig { resolution: 128, ..Default::default() }
        .views_for(&scene)
        .into_iter()
        .map(|v| {
            let a = render_aovs(&scene, &v, strength)?;
            Ok(BakeView { view: v, albedo: a.albedo, emission: a.emission, coverage: a.coverage, strength })
        })
        .collect::<Result<Vec<_>, emberforge::render::RenderError>>()?;
    let out = bake(&sphere.mesh, &views, &BakeConfig { texture_resolution: fixtures::SPHERE_TEXTURE_SIZE, ..Default::default() })?;
    println!("occupied texels {}, unseen {}", out.occupied_texel_count, out.unseen_texel_count);
    println!("emission dice {:.4}", emission_dice(&out.emission_uv, &sphere.materials.emission, 0.01)?);
    Ok(())
}
