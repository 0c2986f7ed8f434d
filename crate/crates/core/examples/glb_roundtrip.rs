//! Saves a fixture at a few emission strengths and loads it back.
//!
//! cargo run --example glb_roundtrip

use emberforge::asset::{load_asset, save_asset};
use emberforge::fixtures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let sphere = fixtures::sphere();
    for s in [1.0, 1.75, 2.5] {
        let path = dir.join(format!("sphere_{s}.glb"));
        save_asset(&sphere.with_strength(s), &path)?;
        let back = load_asset(&path)?;
        println!(
            "{}: {} verts, {} tris, strength {}, geometry identical: {}",
            path.display(),
            back.mesh.vertex_count(),
            back.mesh.triangle_count(),
            back.materials.emission_strength,
            back.mesh.positions() == sphere.mesh.positions()
        );
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join("emberforge_glb_roundtrip");
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
