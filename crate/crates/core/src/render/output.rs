//! On-disk layout of render sets:
//! `<asset>/<rig>/<strength>/<view>_{beauty,albedo,emission,normal,position}.exr`
//! plus `<asset>/manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LightRig, RenderConfig, RenderError, RenderedView, ViewSpec};
use crate::asset::{read_exr, write_exr};

pub const PASS_NAMES: [&str; 5] = ["beauty", "albedo", "emission", "normal", "position"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub view_name: String,
    pub view: ViewSpec,
    pub rig: usize,
    pub strength: f64,
    /// Pass name → path relative to the manifest directory.
    pub passes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderManifest {
    pub schema_version: u32,
    pub asset_id: String,
    pub config: RenderConfig,
    pub rigs: Vec<LightRig>,
    pub entries: Vec<ManifestEntry>,
}

/// Directory name for a strength, always with at least one decimal
/// (`1.0`, `1.25`).
pub fn strength_dir_name(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{s:.1}")
    } else {
        format!("{s}")
    }
}

/// Writes every view as EXR passes under `out/<asset_id>/` and returns the
/// manifest, which is also written to `out/<asset_id>/manifest.json`.
pub fn write_render_set(
    out: &Path,
    asset_id: &str,
    views: &[RenderedView],
    rigs: &[LightRig],
    cfg: &RenderConfig,
) -> Result<RenderManifest, RenderError> {
    let root = out.join(asset_id);
    let mut entries = Vec::with_capacity(views.len());
    for v in views {
        let rel_dir = PathBuf::from(v.rig_index.to_string()).join(strength_dir_name(v.strength));
        std::fs::create_dir_all(root.join(&rel_dir))?;
        let name = v.view.name();
        let mut passes = BTreeMap::new();
        for (pass, map) in PASS_NAMES.iter().zip([
            &v.beauty,
            &v.albedo_pass,
            &v.emission_pass,
            &v.normal_pass,
            &v.position_pass,
        ]) {
            let rel = rel_dir.join(format!("{name}_{pass}.exr"));
            write_exr(map, &root.join(&rel))?;
            passes.insert(pass.to_string(), rel.to_string_lossy().replace('\\', "/"));
        }
        entries.push(ManifestEntry { view_name: name, view: v.view, rig: v.rig_index, strength: v.strength, passes });
    }
    let manifest = RenderManifest {
        schema_version: 1,
        asset_id: asset_id.to_string(),
        config: cfg.clone(),
        rigs: rigs.to_vec(),
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| RenderError::Manifest(e.to_string()))?;
    std::fs::write(root.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

pub fn read_render_manifest(path: &Path) -> Result<RenderManifest, RenderError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| RenderError::Manifest(format!("{}: {e}", path.display())))
}

/// Loads the passes of one manifest entry. Coverage is recovered from the
/// normal pass, which is unit length exactly where geometry was hit.
pub fn load_rendered_view(manifest_dir: &Path, entry: &ManifestEntry) -> Result<RenderedView, RenderError> {
    let load = |pass: &str| {
        let rel = entry
            .passes
            .get(pass)
            .ok_or_else(|| RenderError::Manifest(format!("entry {} lacks pass {pass}", entry.view_name)))?;
        Ok::<_, RenderError>(read_exr(&manifest_dir.join(rel))?)
    };
    let normal_pass = load("normal")?;
    let coverage = normal_pass
        .texels()
        .map(|t| t.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() > 0.25)
        .collect();
    Ok(RenderedView {
        view: entry.view,
        strength: entry.strength,
        rig_index: entry.rig,
        beauty: load("beauty")?,
        albedo_pass: load("albedo")?,
        emission_pass: load("emission")?,
        normal_pass,
        position_pass: load("position")?,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strength_names_keep_a_decimal() {
        assert_eq!(strength_dir_name(1.0), "1.0");
        assert_eq!(strength_dir_name(1.25), "1.25");
        assert_eq!(strength_dir_name(3.0), "3.0");
    }
}
