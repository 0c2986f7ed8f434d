//! Dataset curation: coarse filtering, emission verification, luminous-area
//! strength selection and single-object screening, applied in that order.

mod classifier;

pub use classifier::{
    count_to_verdict, ClientError, HttpClient, MockClient, ObjectCount, ScreeningImage, ScreeningRequest,
    SingleObjectClient,
};

use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{color_entropy, encode_png_tonemapped, Asset, TextureMap};
use crate::render::{render_aovs, render_view_in_scene, LightRig, RenderConfig, RenderError, Scene, ViewSpec};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("strength {strength}: expected {expected} views, got {got}")]
    ViewCountMismatch { strength: f64, expected: usize, got: usize },
    #[error("invalid curation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_STRENGTH_LEVELS: [f64; 7] = [1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0];
pub const CANONICAL_VIEW_COUNT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub min_vertices: usize,
    pub min_entropy: f64,
    pub luminous_pixel_threshold: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub strength_levels: Vec<f64>,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            min_vertices: 500,
            min_entropy: 1.5,
            luminous_pixel_threshold: 0.01,
            ratio_low: 0.01,
            ratio_high: 0.8,
            strength_levels: DEFAULT_STRENGTH_LEVELS.to_vec(),
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        if !(0.0 < self.ratio_low && self.ratio_low < self.ratio_high && self.ratio_high <= 1.0) {
            return Err(CurationError::InvalidConfig(format!(
                "need 0 < ratio_low < ratio_high <= 1, got {} / {}",
                self.ratio_low, self.ratio_high
            )));
        }
        if self.strength_levels.is_empty()
            || self.strength_levels[0] <= 0.0
            || self.strength_levels.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(CurationError::InvalidConfig(
                "strength_levels must be positive and strictly increasing".into(),
            ));
        }
        if !(self.min_entropy >= 0.0) || !(self.luminous_pixel_threshold >= 0.0) {
            return Err(CurationError::InvalidConfig("thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    VertexCount,
    Entropy,
    ZeroEmissionMap,
    ZeroEmissionStrength,
    EmissionEqualsAlbedo,
    MissingMetallicRoughness,
    NoValidStrength,
    MultipleObjects,
    SingleObjectUnknown,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::VertexCount => "vertex_count",
            RejectReason::Entropy => "entropy",
            RejectReason::ZeroEmissionMap => "zero_emission_map",
            RejectReason::ZeroEmissionStrength => "zero_emission_strength",
            RejectReason::EmissionEqualsAlbedo => "emission_equals_albedo",
            RejectReason::MissingMetallicRoughness => "missing_metallic_roughness",
            RejectReason::NoValidStrength => "no_valid_strength",
            RejectReason::MultipleObjects => "multiple_objects",
            RejectReason::SingleObjectUnknown => "single_object_unknown",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of the pipeline for one asset. Stages that were not reached are
/// `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationVerdict {
    pub asset_id: String,
    pub passed_coarse: bool,
    pub passed_emission: Option<bool>,
    pub valid_strengths: Option<Vec<f64>>,
    pub single_object: Option<ObjectCount>,
    pub rejection_reason: Option<RejectReason>,
    pub accepted: bool,
}

/// Step 1: vertex count and albedo colour entropy.
pub fn coarse_filter(asset: &Asset, cfg: &CurationConfig) -> Result<(), RejectReason> {
    if asset.mesh.vertex_count() < cfg.min_vertices {
        return Err(RejectReason::VertexCount);
    }
    match color_entropy(&asset.materials.albedo) {
        Ok(h) if h >= cfg.min_entropy => Ok(()),
        _ => Err(RejectReason::Entropy),
    }
}

/// Largest per-sample difference after resampling both maps to the smaller
/// width and height with nearest-neighbour lookup.
pub fn max_map_difference(a: &TextureMap, b: &TextureMap) -> f32 {
    let w = a.width().min(b.width());
    let h = a.height().min(b.height());
    let (a, b) = (a.to_rgb().resize_nearest(w, h), b.to_rgb().resize_nearest(w, h));
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// Step 2: a non-zero emission map with positive strength that differs from
/// the base colour, plus metallic and roughness maps.
pub fn verify_emission(asset: &Asset) -> Result<(), RejectReason> {
    let m = &asset.materials;
    if !m.has_emission() {
        return Err(RejectReason::ZeroEmissionMap);
    }
    if !(m.emission_strength > 0.0) {
        return Err(RejectReason::ZeroEmissionStrength);
    }
    if max_map_difference(&m.emission, &m.albedo) <= 1.0 / 255.0 {
        return Err(RejectReason::EmissionEqualsAlbedo);
    }
    if m.metallic.is_constant() || m.roughness.is_constant() {
        return Err(RejectReason::MissingMetallicRoughness);
    }
    Ok(())
}

/// Fraction of pixels whose largest channel, clamped to [0, 1], exceeds
/// `threshold`.
pub fn luminous_ratio(pass: &TextureMap, threshold: f64) -> f64 {
    let n = pass.pixel_count();
    if n == 0 {
        return 0.0;
    }
    let lit = pass
        .texels()
        .filter(|t| t.iter().map(|&v| (v as f64).clamp(0.0, 1.0)).fold(0.0, f64::max) > threshold)
        .count();
    lit as f64 / n as f64
}

/// Step 4 on precomputed ratios: strength `i` survives when every
/// `ratios[i][v]` lies in `[low, high]`.
pub fn select_from_ratios(strengths: &[f64], ratios: &[Vec<f64>], low: f64, high: f64) -> Vec<f64> {
    strengths
        .iter()
        .zip(ratios)
        .filter(|(_, r)| r.iter().all(|&x| x >= low && x <= high))
        .map(|(&s, _)| s)
        .collect()
}

/// Step 4: keeps the strengths whose ten emission passes all have a luminous
/// ratio within `[ratio_low, ratio_high]`, preserving input order.
pub fn select_strengths(per_strength: &[(f64, Vec<TextureMap>)], cfg: &CurationConfig) -> Result<Vec<f64>, CurationError> {
    for (s, views) in per_strength {
        if views.len() != CANONICAL_VIEW_COUNT {
            return Err(CurationError::ViewCountMismatch {
                strength: *s,
                expected: CANONICAL_VIEW_COUNT,
                got: views.len(),
            });
        }
    }
    let strengths: Vec<f64> = per_strength.iter().map(|(s, _)| *s).collect();
    let ratios: Vec<Vec<f64>> = per_strength
        .iter()
        .map(|(_, views)| views.iter().map(|v| luminous_ratio(v, cfg.luminous_pixel_threshold)).collect())
        .collect();
    Ok(select_from_ratios(&strengths, &ratios, cfg.ratio_low, cfg.ratio_high))
}

/// Emission passes of the canonical views at every strength. The unit-strength
/// pass is traced once and rescaled exactly as the renderer would.
pub fn emission_passes(
    scene: &Scene,
    views: &[ViewSpec],
    strengths: &[f64],
) -> Result<Vec<(f64, Vec<TextureMap>)>, CurationError> {
    let unit: Vec<TextureMap> = views
        .par_iter()
        .map(|v| render_aovs(scene, v, 1.0).map(|a| a.emission))
        .collect::<Result<_, _>>()?;
    Ok(strengths
        .iter()
        .map(|&s| (s, unit.iter().map(|m| m.map(|e| (e as f64 * s) as f32)).collect()))
        .collect())
}

/// Names and canonical indices of the four screening views.
pub const SCREENING_VIEWS: [(&str, usize); 4] = [("front", 2), ("top", 0), ("right", 3), ("left_rear_upper", 8)];

/// Renders the screening views for the single-object classifier.
#[derive(Clone, Debug)]
pub struct Screener {
    pub config: RenderConfig,
    pub rig: LightRig,
}

impl Default for Screener {
    fn default() -> Self {
        let rig = LightRig { env_intensity: 1.0, ..LightRig::dark() };
        Self { config: RenderConfig { samples_per_pixel: 16, ..Default::default() }, rig }
    }
}

impl Screener {
    pub fn render(&self, asset: &Asset, scene: &Scene) -> Result<Vec<ScreeningImage>, CurationError> {
        let views = self.config.views_for(scene);
        SCREENING_VIEWS
            .iter()
            .map(|&(name, idx)| {
                let r = render_view_in_scene(
                    scene,
                    &views[idx],
                    &self.rig,
                    asset.materials.emission_strength,
                    &self.config,
                )?;
                let png = encode_png_tonemapped(&r.beauty).map_err(RenderError::from)?;
                Ok(ScreeningImage { name: name.to_string(), png })
            })
            .collect()
    }
}

/// Step 5. Client failures become `Unknown` with a warning.
pub fn screen_single_object(
    asset: &Asset,
    scene: &Scene,
    client: &dyn SingleObjectClient,
    screener: &Screener,
) -> Result<ObjectCount, CurationError> {
    let request = ScreeningRequest {
        asset_id: asset.id.clone(),
        metadata: asset.metadata.clone(),
        views: screener.render(asset, scene)?,
    };
    Ok(client.classify(&request).unwrap_or_else(|e| {
        warn!("{}: single-object screening failed: {e}", asset.id);
        ObjectCount::Unknown
    }))
}

/// Runs all stages, stopping at the first rejection.
pub fn curate(
    asset: &Asset,
    cfg: &CurationConfig,
    client: &dyn SingleObjectClient,
    screener: &Screener,
) -> Result<CurationVerdict, CurationError> {
    cfg.validate()?;
    let mut verdict = CurationVerdict {
        asset_id: asset.id.clone(),
        passed_coarse: false,
        passed_emission: None,
        valid_strengths: None,
        single_object: None,
        rejection_reason: None,
        accepted: false,
    };
    if let Err(r) = coarse_filter(asset, cfg) {
        verdict.rejection_reason = Some(r);
        return Ok(verdict);
    }
    verdict.passed_coarse = true;
    if let Err(r) = verify_emission(asset) {
        verdict.passed_emission = Some(false);
        verdict.rejection_reason = Some(r);
        return Ok(verdict);
    }
    verdict.passed_emission = Some(true);

    let scene = Scene::new(asset)?;
    let views = screener.config.views_for(&scene);
    let passes = emission_passes(&scene, &views, &cfg.strength_levels)?;
    let valid = select_strengths(&passes, cfg)?;
    let none_valid = valid.is_empty();
    verdict.valid_strengths = Some(valid);
    if none_valid {
        verdict.rejection_reason = Some(RejectReason::NoValidStrength);
        return Ok(verdict);
    }

    let count = screen_single_object(asset, &scene, client, screener)?;
    verdict.single_object = Some(count);
    match count {
        ObjectCount::Single => verdict.accepted = true,
        ObjectCount::Multiple => verdict.rejection_reason = Some(RejectReason::MultipleObjects),
        ObjectCount::Unknown => {
            warn!("{}: single-object status unknown; flagged, not accepted", asset.id);
            verdict.rejection_reason = Some(RejectReason::SingleObjectUnknown);
        }
    }
    Ok(verdict)
}

/// Writes verdicts as JSON lines sorted by asset id.
pub fn write_manifest(path: &Path, verdicts: &[CurationVerdict]) -> Result<(), CurationError> {
    let mut sorted: Vec<&CurationVerdict> = verdicts.iter().collect();
    sorted.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in sorted {
        let line = serde_json::to_string(v).expect("verdict serializes");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<CurationVerdict>, CurationError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| CurationError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn quad_fails_vertex_count() {
        assert_eq!(coarse_filter(&fixtures::quad(), &CurationConfig::default()), Err(RejectReason::VertexCount));
    }

    #[test]
    fn uniform_albedo_fails_entropy() {
        let mut a = fixtures::sphere();
        a.materials.albedo = TextureMap::filled(16, 16, &[0.5, 0.5, 0.5]);
        assert_eq!(coarse_filter(&a, &CurationConfig::default()), Err(RejectReason::Entropy));
    }

    #[test]
    fn emission_checks() {
        let good = fixtures::led_panel_wall();
        assert_eq!(verify_emission(&good), Ok(()));

        let mut a = good.clone();
        a.materials.emission = TextureMap::filled(4, 4, &[0.0; 3]);
        assert_eq!(verify_emission(&a), Err(RejectReason::ZeroEmissionMap));

        let mut a = good.clone();
        a.materials.emission = a.materials.albedo.clone();
        assert_eq!(verify_emission(&a), Err(RejectReason::EmissionEqualsAlbedo));

        let mut a = good.clone();
        a.materials.emission_strength = 0.0;
        assert_eq!(verify_emission(&a), Err(RejectReason::ZeroEmissionStrength));

        let mut a = good;
        a.materials.roughness = TextureMap::constant(&[0.5]);
        assert_eq!(verify_emission(&a), Err(RejectReason::MissingMetallicRoughness));
    }

    #[test]
    fn ratio_counts_quadrant() {
        let m = TextureMap::from_fn(8, 8, 3, |x, y| if x < 4 && y < 4 { [1.0; 3] } else { [0.0; 3] });
        assert_eq!(luminous_ratio(&m, 0.01), 0.25);
        assert_eq!(luminous_ratio(&TextureMap::filled(4, 4, &[0.0; 3]), 0.01), 0.0);
    }

    #[test]
    fn wrong_view_count_is_an_error() {
        let passes = vec![(1.0, vec![TextureMap::filled(4, 4, &[0.5; 3]); 9])];
        assert!(matches!(
            select_strengths(&passes, &CurationConfig::default()),
            Err(CurationError::ViewCountMismatch { got: 9, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = CurationConfig::default();
        assert!(c.validate().is_ok());
        c.strength_levels = vec![1.0, 1.0];
        assert!(c.validate().is_err());
        let c = CurationConfig { ratio_low: 0.9, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
