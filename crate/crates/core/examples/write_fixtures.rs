//! Regenerates the bundled fixture assets.
//!
//! cargo run --example write_fixtures -- [DIR]   (default: crates/core/fixtures)

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    emberforge::fixtures::write_all(&dir)?;
    for name in emberforge::fixtures::FIXTURE_NAMES {
        let p = dir.join(format!("{name}.glb"));
        println!("{} ({} bytes)", p.display(), std::fs::metadata(&p)?.len());
    }
    Ok(())
}
