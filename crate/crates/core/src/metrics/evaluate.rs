use serde::{Deserialize, Serialize};

use super::*;
use crate::asset::Asset;
use crate::render::{render_view_in_scene, sample_rigs, RenderConfig, RenderedView, Scene};
use crate::strength::FeatureProvider;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Matched rendering setup for pred/gt comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    /// Indices into the ten canonical views.
    pub views: Vec<usize>,
    /// Number of light rigs sampled around the ground-truth asset.
    pub rigs: usize,
    /// Strengths to render both assets at. When absent, each asset renders
    /// at its own emission strength.
    pub strengths: Option<Vec<f64>>,
    pub seed: u64,
    pub render: RenderConfig,
    pub dice_threshold: f64,
    /// PSNR peak value for albedo and emission passes.
    pub peak: f64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            views: (0..10).collect(),
            rigs: 1,
            strengths: None,
            seed: 0,
            render: RenderConfig { samples_per_pixel: 16, resolution: 64, ..Default::default() },
            dice_threshold: 0.01,
            peak: 1.0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: String| Err(MetricError::InvalidProtocol(m));
        if self.views.is_empty() || self.views.iter().any(|&v| v >= 10) {
            return bad("views must be a non-empty list of canonical indices 0..10".into());
        }
        if self.rigs == 0 {
            return bad("rigs must be >= 1".into());
        }
        if let Some(s) = &self.strengths {
            if s.is_empty() || s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad("strengths must be non-empty, finite and >= 0".into());
            }
        }
        if !(self.peak > 0.0) {
            return bad("peak must be positive".into());
        }
        self.render.validate().map_err(|e| MetricError::InvalidProtocol(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: String,
    pub strength_pred: f64,
    pub strength_gt: f64,
    pub psnr_albedo: f64,
    pub ssim_albedo: f64,
    pub psnr_emission: f64,
    pub ssim_emission: f64,
    pub dice: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub psnr_albedo: f64,
    pub ssim_albedo: f64,
    pub psnr_emission: f64,
    pub ssim_emission: f64,
    pub dice: f64,
    pub frechet_distance: f64,
    pub cosine_similarity: f64,
    pub strength_rmse: f64,
}

impl AggregateMetrics {
    /// Means of the per-view entries in order, plus the set-level values.
    pub fn from_views(views: &[ViewMetrics], frechet_distance: f64, cosine_similarity: f64, strength_rmse: f64) -> Self {
        let mean = |f: fn(&ViewMetrics) -> f64| views.iter().map(f).sum::<f64>() / views.len().max(1) as f64;
        Self {
            psnr_albedo: mean(|v| v.psnr_albedo),
            ssim_albedo: mean(|v| v.ssim_albedo),
            psnr_emission: mean(|v| v.psnr_emission),
            ssim_emission: mean(|v| v.ssim_emission),
            dice: mean(|v| v.dice),
            frechet_distance,
            cosine_similarity,
            strength_rmse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub pred_id: String,
    pub gt_id: String,
    pub feature_provider: String,
    pub protocol: EvalProtocol,
    pub per_view: Vec<ViewMetrics>,
    pub aggregate: AggregateMetrics,
}

fn same_topology(a: &Asset, b: &Asset) -> bool {
    a.mesh.triangles() == b.mesh.triangles() && a.mesh.positions() == b.mesh.positions()
}

/// Cosine similarity with all-zero features treated as a direction of
/// their own: two zero vectors agree (1), one zero vector disagrees (0).
fn feature_cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    match cosine_similarity(a, b) {
        Err(MetricError::ZeroVector) => {
            let za = a.iter().all(|v| *v == 0.0);
            let zb = b.iter().all(|v| *v == 0.0);
            Ok(if za && zb { 1.0 } else { 0.0 })
        }
        r => r,
    }
}

/// Renders both assets under one protocol and scores the prediction.
pub fn evaluate(
    pred: &Asset,
    gt: &Asset,
    protocol: &EvalProtocol,
    provider: &dyn FeatureProvider,
) -> Result<MetricReport, MetricError> {
    protocol.validate()?;
    if !same_topology(pred, gt) {
        return Err(MetricError::TopologyMismatch);
    }
    let render_err = |e: crate::render::RenderError| MetricError::Render(e.to_string());
    let gt_scene = Scene::new(gt).map_err(render_err)?;
    let pred_scene = Scene::new(pred).map_err(render_err)?;
    let cfg = RenderConfig { seed: protocol.seed, ..protocol.render.clone() };
    let all_views = cfg.views_for(&gt_scene);
    let rigs = sample_rigs(&gt_scene, protocol.rigs, protocol.seed);
    let strength_pairs: Vec<(f64, f64)> = match &protocol.strengths {
        Some(s) => s.iter().map(|&x| (x, x)).collect(),
        None => vec![(pred.materials.emission_strength, gt.materials.emission_strength)],
    };

    let mut per_view = Vec::new();
    let (mut feats_pred, mut feats_gt, mut cosines) = (Vec::new(), Vec::new(), Vec::new());
    for &vi in &protocol.views {
        let view = &all_views[vi];
        for &(sp, sg) in &strength_pairs {
            let mut first: Option<(RenderedView, RenderedView)> = None;
            for rig in &rigs {
                let rp = render_view_in_scene(&pred_scene, view, rig, sp, &cfg).map_err(render_err)?;
                let rg = render_view_in_scene(&gt_scene, view, rig, sg, &cfg).map_err(render_err)?;
                let (fp, fg) = (provider.extract(&rp.beauty), provider.extract(&rg.beauty));
                cosines.push(feature_cosine(&fp, &fg)?);
                feats_pred.push(fp);
                feats_gt.push(fg);
                first.get_or_insert((rp, rg));
            }
            let (rp, rg) = first.expect("at least one rig");
            let covered: Vec<bool> = rp.coverage.iter().zip(&rg.coverage).map(|(a, b)| *a || *b).collect();
            per_view.push(ViewMetrics {
                view: view.name(),
                strength_pred: sp,
                strength_gt: sg,
                psnr_albedo: psnr_masked(&rp.albedo_pass, &rg.albedo_pass, protocol.peak, Some(&covered))?,
                ssim_albedo: ssim(&rp.albedo_pass, &rg.albedo_pass)?,
                psnr_emission: psnr_masked(&rp.emission_pass, &rg.emission_pass, protocol.peak, Some(&covered))?,
                ssim_emission: ssim(&rp.emission_pass, &rg.emission_pass)?,
                dice: emission_dice(&rp.emission_pass, &rg.emission_pass, protocol.dice_threshold)?,
            });
        }
    }
    let frechet = frechet_distance(&GaussianFit::from_samples(&feats_pred)?, &GaussianFit::from_samples(&feats_gt)?)?;
    let cosine = cosines.iter().sum::<f64>() / cosines.len() as f64;
    let rmse = strength_rmse(&[(pred.materials.emission_strength, gt.materials.emission_strength)])?;
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        pred_id: pred.id.clone(),
        gt_id: gt.id.clone(),
        feature_provider: provider.name().to_string(),
        protocol: protocol.clone(),
        aggregate: AggregateMetrics::from_views(&per_view, frechet, cosine, rmse),
        per_view,
    })
}
