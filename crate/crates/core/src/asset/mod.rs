//! Emission-capable assets: geometry, PBR material maps, and glTF/GLB I/O.
//!
//! An [`Asset`] couples a triangle [`Mesh`] with a [`MaterialSet`] made of
//! base colour, metallic, roughness and emission maps plus a global emission
//! strength. Constant material factors are represented as 1×1 maps.

mod color;
mod gltf;
mod io;
mod mesh;
mod texture;

pub use color::{color_entropy, linear_to_srgb, srgb_to_linear, ENTROPY_BINS_PER_CHANNEL};
pub use gltf::{load_asset, load_asset_from_bytes, save_asset, save_asset_to_bytes};
pub use io::{
    decode_emtx, encode_emtx, encode_png_tonemapped, read_emtx, read_exr, write_emtx, write_exr,
    write_png_tonemapped,
};
pub use mesh::{smooth_normals, Aabb, Mesh};
pub use texture::{luminance_rgb, TextureMap};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("unsupported glTF feature: {0}")]
    UnsupportedFeature(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("missing buffer: {0}")]
    MissingBuffer(String),
    #[error("invalid asset: {0}")]
    InvalidAsset(String),
    #[error("empty texture")]
    EmptyTexture,
    #[error("image codec error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// PBR material channels of an asset, all in linear space.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialSet {
    /// RGB base colour.
    pub albedo: TextureMap,
    /// Single-channel metalness.
    pub metallic: TextureMap,
    /// Single-channel perceptual roughness.
    pub roughness: TextureMap,
    /// RGB emission colour.
    pub emission: TextureMap,
    /// Global multiplier on emitted radiance.
    pub emission_strength: f64,
}

impl MaterialSet {
    /// A non-emissive constant material.
    pub fn constant(albedo: [f32; 3], metallic: f32, roughness: f32) -> Self {
        Self {
            albedo: TextureMap::constant(&albedo),
            metallic: TextureMap::constant(&[metallic]),
            roughness: TextureMap::constant(&[roughness]),
            emission: TextureMap::constant(&[0.0, 0.0, 0.0]),
            emission_strength: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AssetError> {
        let check = |name: &str, map: &TextureMap, channels: u8| -> Result<(), AssetError> {
            if map.channels() != channels {
                return Err(AssetError::InvalidAsset(format!(
                    "{name} map must have {channels} channel(s), has {}",
                    map.channels()
                )));
            }
            let (lo, hi) = map.min_max();
            if lo < 0.0 || hi > 1.0 {
                return Err(AssetError::InvalidAsset(format!(
                    "{name} map samples outside [0, 1]: [{lo}, {hi}]"
                )));
            }
            Ok(())
        };
        check("albedo", &self.albedo, 3)?;
        check("metallic", &self.metallic, 1)?;
        check("roughness", &self.roughness, 1)?;
        check("emission", &self.emission, 3)?;
        if !(self.emission_strength.is_finite() && self.emission_strength >= 0.0) {
            return Err(AssetError::InvalidAsset(format!(
                "emission strength {} must be finite and >= 0",
                self.emission_strength
            )));
        }
        Ok(())
    }

    /// True when the emission map has at least one non-zero texel.
    pub fn has_emission(&self) -> bool {
        self.emission.data().iter().any(|&v| v > 0.0)
    }
}

/// A curated unit: geometry, materials, and free-form metadata tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Asset {
    pub id: String,
    pub mesh: Mesh,
    pub materials: MaterialSet,
    pub metadata: Vec<String>,
}

impl Asset {
    pub fn new(
        id: impl Into<String>,
        mesh: Mesh,
        materials: MaterialSet,
        metadata: Vec<String>,
    ) -> Result<Self, AssetError> {
        let asset = Self { id: id.into(), mesh, materials, metadata };
        asset.validate()?;
        Ok(asset)
    }

    pub fn validate(&self) -> Result<(), AssetError> {
        if !is_filesystem_safe(&self.id) {
            return Err(AssetError::InvalidAsset(format!("asset id {:?} is not filesystem-safe", self.id)));
        }
        self.materials.validate()
    }

    pub fn with_strength(&self, strength: f64) -> Asset {
        let mut a = self.clone();
        a.materials.emission_strength = strength;
        a
    }
}

/// Non-empty, made of `[A-Za-z0-9._-]`, and not starting with a dot.
pub fn is_filesystem_safe(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Maps an arbitrary name onto a filesystem-safe id.
pub fn sanitize_id(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    let s = s.trim_start_matches('.').to_string();
    if s.is_empty() {
        "asset".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids() {
        assert!(is_filesystem_safe("led_panel-01.v2"));
        assert!(!is_filesystem_safe(""));
        assert!(!is_filesystem_safe("../x"));
        assert!(!is_filesystem_safe("a b"));
        assert_eq!(sanitize_id("my lamp/1"), "my_lamp_1");
    }

    #[test]
    fn material_ranges_are_checked() {
        let mut m = MaterialSet::constant([0.5; 3], 0.0, 0.5);
        assert!(m.validate().is_ok());
        m.emission_strength = -1.0;
        assert!(m.validate().is_err());
        let mut m = MaterialSet::constant([0.5; 3], 0.0, 0.5);
        m.emission = TextureMap::constant(&[1.5, 0.0, 0.0]);
        assert!(m.validate().is_err());
    }
}
