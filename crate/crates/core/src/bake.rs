//! Fuses per-view albedo/emission images into UV textures: every texel's
//! surface point is projected into each view, visibility is tested by a
//! ray cast against the mesh, and visible samples are averaged with
//! `cos^p` weights. Texels no view sees are filled from covered neighbours
//! of the same UV island for a few texels, and counted otherwise.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{Asset, AssetError, MaterialSet, Mesh, TextureMap};
use crate::render::{load_rendered_view, read_render_manifest, Camera, RenderError, Scene, ViewSpec, V3};

/// Share of occupied texels that may stay unseen before assembly fails.
pub const MAX_UNSEEN_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum BakeError {
    #[error("mesh has no texture coordinates")]
    MissingUVs,
    #[error("no views to bake from")]
    EmptyViews,
    #[error("invalid bake config: {0}")]
    InvalidConfig(String),
    #[error("view {index} is invalid: {reason}")]
    InvalidView { index: usize, reason: String },
    #[error("{unseen} of {occupied} occupied texels are unseen (limit {limit_percent}%)")]
    UncoveredSurface { unseen: usize, occupied: usize, limit_percent: f64 },
    #[error("texture resolutions differ: {0}")]
    ResolutionMismatch(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeConfig {
    pub texture_resolution: u32,
    pub cos_weight_power: f64,
    /// Visibility tolerance as a fraction of the mesh diameter.
    pub depth_epsilon: f64,
    pub seam_dilation: u32,
    /// Order in which views are accumulated; all views when absent.
    pub view_order: Option<Vec<usize>>,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self { texture_resolution: 256, cos_weight_power: 4.0, depth_epsilon: 1e-3, seam_dilation: 2, view_order: None }
    }
}

impl BakeConfig {
    pub fn validate(&self) -> Result<(), BakeError> {
        let r = self.texture_resolution;
        if r < 64 || !r.is_power_of_two() {
            return Err(BakeError::InvalidConfig(format!("texture_resolution must be a power of two >= 64, got {r}")));
        }
        if !(self.cos_weight_power >= 0.0) || !(self.depth_epsilon > 0.0) {
            return Err(BakeError::InvalidConfig("cos_weight_power must be >= 0 and depth_epsilon > 0".into()));
        }
        Ok(())
    }
}

/// One input view: camera, per-pixel maps, the pixels that hit the mesh,
/// and the strength the emission map was rendered at.
#[derive(Clone, Debug)]
pub struct BakeView {
    pub view: ViewSpec,
    pub albedo: TextureMap,
    pub emission: TextureMap,
    pub coverage: Vec<bool>,
    pub strength: f64,
}

#[derive(Clone, Debug)]
pub struct BakeResult {
    pub albedo_uv: TextureMap,
    pub emission_uv: TextureMap,
    /// Sum of fusion weights per texel.
    pub coverage_uv: Vec<f64>,
    /// Largest `cos θ` among views that saw the texel (0 when none).
    pub best_cos: Vec<f64>,
    /// Texels whose centre lies on at least one triangle in UV space.
    pub occupied: Vec<bool>,
    /// Texels that carry a value (seen, or filled by dilation).
    pub filled: Vec<bool>,
    pub occupied_texel_count: usize,
    pub unseen_texel_count: usize,
}

#[derive(Clone, Copy)]
struct SurfacePt {
    position: V3,
    normal: V3,
}

fn v3(p: [f32; 3]) -> V3 {
    V3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

/// Surface points under each texel centre, from every triangle covering it.
fn rasterize_uv(mesh: &Mesh, res: u32) -> Vec<Vec<SurfacePt>> {
    let n = res as usize;
    let mut texels: Vec<Vec<SurfacePt>> = vec![Vec::new(); n * n];
    let (pos, nrm, uvs) = (mesh.positions(), mesh.normals(), mesh.uvs());
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|i| i as usize);
        let [ta, tb, tc] = [uvs[a], uvs[b], uvs[c]].map(|t| [t[0] as f64 * n as f64, t[1] as f64 * n as f64]);
        let det = (tb[0] - ta[0]) * (tc[1] - ta[1]) - (tc[0] - ta[0]) * (tb[1] - ta[1]);
        if det.abs() < 1e-14 {
            continue;
        }
        let lo = |k: usize| ta[k].min(tb[k]).min(tc[k]).floor().max(0.0) as usize;
        let hi = |k: usize| (ta[k].max(tb[k]).max(tc[k]).ceil() as usize).min(n);
        for y in lo(1)..hi(1) {
            for x in lo(0)..hi(0) {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let l1 = ((px - ta[0]) * (tc[1] - ta[1]) - (tc[0] - ta[0]) * (py - ta[1])) / det;
                let l2 = ((tb[0] - ta[0]) * (py - ta[1]) - (px - ta[0]) * (tb[1] - ta[1])) / det;
                let l0 = 1.0 - l1 - l2;
                let tol = -1e-9;
                if l0 < tol || l1 < tol || l2 < tol {
                    continue;
                }
                let position = v3(pos[a]) * l0 + v3(pos[b]) * l1 + v3(pos[c]) * l2;
                let normal = v3(nrm[a]) * l0 + v3(nrm[b]) * l1 + v3(nrm[c]) * l2;
                if normal.norm() > 0.0 {
                    texels[y * n + x].push(SurfacePt { position, normal: normal.normalize() });
                }
            }
        }
    }
    texels
}

/// Image lookup at continuous pixel coordinates (pixel centres at
/// `i + 0.5`): bilinear when all four neighbours hit the mesh, nearest
/// when only the nearest does, `None` on background.
fn sample_view(img: &TextureMap, coverage: &[bool], px: f64, py: f64) -> Option<[f64; 3]> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (fx, fy) = (px - 0.5, py - 0.5);
    let (x0, y0) = (fx.floor() as i64, fy.floor() as i64);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && coverage[(y * w + x) as usize];
    let get = |x: i64, y: i64| img.rgb(x as u32, y as u32).map(f64::from);
    if inside(x0, y0) && inside(x0 + 1, y0) && inside(x0, y0 + 1) && inside(x0 + 1, y0 + 1) {
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let (a, b, c, d) = (get(x0, y0), get(x0 + 1, y0), get(x0, y0 + 1), get(x0 + 1, y0 + 1));
        return Some(std::array::from_fn(|k| {
            (a[k] * (1.0 - tx) + b[k] * tx) * (1.0 - ty) + (c[k] * (1.0 - tx) + d[k] * tx) * ty
        }));
    }
    let (nx, ny) = (px.floor() as i64, py.floor() as i64);
    inside(nx, ny).then(|| get(nx, ny))
}

/// Labels 4-connected components of `mask`; `usize::MAX` outside it.
fn label_islands(mask: &[bool], n: usize) -> Vec<usize> {
    let mut label = vec![usize::MAX; mask.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % n, i / n);
            let nbrs = [(x > 0).then(|| i - 1), (x + 1 < n).then(|| i + 1), (y > 0).then(|| i - n), (y + 1 < n).then(|| i + n)];
            for j in nbrs.into_iter().flatten() {
                if mask[j] && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

pub fn bake(mesh: &Mesh, views: &[BakeView], cfg: &BakeConfig) -> Result<BakeResult, BakeError> {
    cfg.validate()?;
    if !mesh.has_uvs() {
        return Err(BakeError::MissingUVs);
    }
    if views.is_empty() {
        return Err(BakeError::EmptyViews);
    }
    for (index, v) in views.iter().enumerate() {
        v.view.validate().map_err(|e| BakeError::InvalidView { index, reason: e.to_string() })?;
        let px = (v.view.resolution * v.view.resolution) as usize;
        if v.albedo.pixel_count() != px || v.emission.pixel_count() != px || v.coverage.len() != px {
            return Err(BakeError::InvalidView { index, reason: "map size differs from view resolution".into() });
        }
    }
    let order: Vec<usize> = match &cfg.view_order {
        Some(o) => {
            if let Some(&bad) = o.iter().find(|&&i| i >= views.len()) {
                return Err(BakeError::InvalidConfig(format!("view_order index {bad} out of range")));
            }
            o.clone()
        }
        None => (0..views.len()).collect(),
    };

    let holder = Asset::new("bake", mesh.clone(), MaterialSet::constant([0.5; 3], 0.0, 1.0), Vec::new())?;
    let scene = Scene::new(&holder)?;
    let eps = cfg.depth_epsilon * scene.diameter();
    let cameras: Vec<Camera> = views.iter().map(|v| Camera::new(&v.view, scene.center)).collect();

    let n = cfg.texture_resolution as usize;
    let points = rasterize_uv(mesh, cfg.texture_resolution);
    let occupied: Vec<bool> = points.iter().map(|p| !p.is_empty()).collect();

    // (albedo sum, emission sum, weight sum, best cos) per texel.
    let fused: Vec<([f64; 3], [f64; 3], f64, f64)> = points
        .par_iter()
        .map(|pts| {
            let (mut alb, mut emi, mut wsum, mut best) = ([0.0; 3], [0.0; 3], 0.0, 0.0f64);
            for sp in pts {
                for &vi in &order {
                    let (view, cam) = (&views[vi], &cameras[vi]);
                    let to_eye = cam.origin - sp.position;
                    let dist = to_eye.norm();
                    let cos = sp.normal.dot(&to_eye) / dist;
                    if cos <= 0.0 {
                        continue;
                    }
                    let Some((px, py, _)) = cam.project(sp.position) else { continue };
                    let dir = -to_eye / dist;
                    match scene.intersect(&cam.origin, &dir) {
                        Some(hit) if hit.t >= dist - eps => {}
                        _ => continue,
                    }
                    let (Some(a), Some(e)) =
                        (sample_view(&view.albedo, &view.coverage, px, py), sample_view(&view.emission, &view.coverage, px, py))
                    else {
                        continue;
                    };
                    let w = cos.powf(cfg.cos_weight_power);
                    let inv_s = if view.strength > 0.0 { 1.0 / view.strength } else { 0.0 };
                    for k in 0..3 {
                        alb[k] += w * a[k];
                        emi[k] += w * e[k] * inv_s;
                    }
                    wsum += w;
                    best = best.max(cos);
                }
            }
            (alb, emi, wsum, best)
        })
        .collect();

    let mut albedo = vec![[0.0f64; 3]; n * n];
    let mut emission = vec![[0.0f64; 3]; n * n];
    let mut filled = vec![false; n * n];
    for (i, (a, e, w, _)) in fused.iter().enumerate() {
        if *w > 0.0 {
            albedo[i] = a.map(|v| v / w);
            emission[i] = e.map(|v| v / w);
            filled[i] = true;
        }
    }

    // Seam dilation: occupied texels take from filled 4-neighbours of their
    // own island; gutter texels take from any filled 4-neighbour.
    let island = label_islands(&occupied, n);
    for _ in 0..cfg.seam_dilation {
        let snapshot = filled.clone();
        let (alb_prev, emi_prev) = (albedo.clone(), emission.clone());
        for i in 0..n * n {
            if snapshot[i] {
                continue;
            }
            let (x, y) = (i % n, i / n);
            let nbrs = [(x > 0).then(|| i - 1), (x + 1 < n).then(|| i + 1), (y > 0).then(|| i - n), (y + 1 < n).then(|| i + n)];
            let (mut a, mut e, mut c) = ([0.0; 3], [0.0; 3], 0usize);
            for j in nbrs.into_iter().flatten() {
                if snapshot[j] && (!occupied[i] || island[j] == island[i]) {
                    for k in 0..3 {
                        a[k] += alb_prev[j][k];
                        e[k] += emi_prev[j][k];
                    }
                    c += 1;
                }
            }
            if c > 0 {
                albedo[i] = a.map(|v| v / c as f64);
                emission[i] = e.map(|v| v / c as f64);
                filled[i] = true;
            }
        }
    }

    let to_map = |px: &[[f64; 3]]| {
        let data = px.iter().flat_map(|p| p.map(|v| v as f32)).collect();
        TextureMap::new(cfg.texture_resolution, cfg.texture_resolution, 3, data)
    };
    let occupied_texel_count = occupied.iter().filter(|o| **o).count();
    let unseen_texel_count = occupied.iter().zip(&filled).filter(|(o, f)| **o && !**f).count();
    Ok(BakeResult {
        albedo_uv: to_map(&albedo)?,
        emission_uv: to_map(&emission)?,
        coverage_uv: fused.iter().map(|f| f.2).collect(),
        best_cos: fused.iter().map(|f| f.3).collect(),
        occupied,
        filled,
        occupied_texel_count,
        unseen_texel_count,
    })
}

fn check_resolution(name: &str, map: &TextureMap, res: u32) -> Result<(), BakeError> {
    if map.is_constant() || (map.width() == res && map.height() == res) {
        Ok(())
    } else {
        Err(BakeError::ResolutionMismatch(format!("{name} is {}x{}, bake is {res}x{res}", map.width(), map.height())))
    }
}

/// Builds the textured asset from a bake: baked albedo and emission,
/// supplied metallic/roughness, and a global emission strength.
pub fn assemble_asset(
    mesh: &Mesh,
    bake: &BakeResult,
    metallic: TextureMap,
    roughness: TextureMap,
    strength: f64,
) -> Result<Asset, BakeError> {
    let res = bake.albedo_uv.width();
    check_resolution("emission", &bake.emission_uv, res)?;
    check_resolution("metallic", &metallic, res)?;
    check_resolution("roughness", &roughness, res)?;
    let limit = MAX_UNSEEN_FRACTION * bake.occupied_texel_count as f64;
    if bake.unseen_texel_count as f64 > limit || bake.occupied_texel_count == 0 {
        return Err(BakeError::UncoveredSurface {
            unseen: bake.unseen_texel_count,
            occupied: bake.occupied_texel_count,
            limit_percent: 100.0 * MAX_UNSEEN_FRACTION,
        });
    }
    let materials = MaterialSet {
        albedo: bake.albedo_uv.clone(),
        metallic,
        roughness,
        emission: bake.emission_uv.clone(),
        emission_strength: strength,
    };
    Ok(Asset::new("baked", mesh.clone(), materials, Vec::new())?)
}

/// Loads bake inputs from a render output directory (the one holding
/// `manifest.json`): rig 0 at the highest rendered strength, one entry per
/// view.
pub fn load_bake_views(render_dir: &Path) -> Result<Vec<BakeView>, BakeError> {
    let manifest = read_render_manifest(&render_dir.join("manifest.json"))?;
    let top = manifest.entries.iter().filter(|e| e.rig == 0).map(|e| e.strength).fold(f64::NEG_INFINITY, f64::max);
    let mut views = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.rig == 0 && e.strength == top) {
        let r = load_rendered_view(render_dir, entry)?;
        views.push(BakeView {
            view: r.view,
            albedo: r.albedo_pass,
            emission: r.emission_pass,
            coverage: r.coverage,
            strength: r.strength,
        });
    }
    if views.is_empty() {
        return Err(BakeError::EmptyViews);
    }
    Ok(views)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::render::{render_aovs, RenderConfig};

    fn views_of(asset: &Asset, indices: &[usize], res: u32) -> Vec<BakeView> {
        let scene = Scene::new(asset).unwrap();
        let cfg = RenderConfig { resolution: res, ..Default::default() };
        let all = cfg.views_for(&scene);
        indices
            .iter()
            .map(|&i| {
                let a = render_aovs(&scene, &all[i], 1.0).unwrap();
                BakeView { view: all[i].clone(), albedo: a.albedo, emission: a.emission, coverage: a.coverage, strength: 1.0 }
            })
            .collect()
    }

    fn red_quad() -> Asset {
        let mut a = fixtures::quad();
        a.materials.albedo = TextureMap::constant(&[1.0, 0.0, 0.0]);
        a
    }

    #[test]
    fn front_quad_bakes_constant_red() {
        let a = red_quad();
        let cfg = BakeConfig { texture_resolution: 64, ..Default::default() };
        let r = bake(&a.mesh, &views_of(&a, &[2], 64), &cfg).unwrap();
        assert_eq!(r.occupied_texel_count, 64 * 64);
        assert_eq!(r.unseen_texel_count, 0);
        for (t, w) in r.albedo_uv.texels().zip(&r.coverage_uv) {
            if *w > 0.0 {
                assert!((t[0] - 1.0).abs() < 1e-6 && t[1].abs() < 1e-6 && t[2].abs() < 1e-6);
            }
        }
    }

    #[test]
    fn duplicate_views_match_single_view() {
        let a = fixtures::sphere();
        let cfg = BakeConfig { texture_resolution: 64, ..Default::default() };
        let one = views_of(&a, &[2], 48);
        let two: Vec<BakeView> = one.iter().chain(one.iter()).cloned().collect();
        let (r1, r2) = (bake(&a.mesh, &one, &cfg).unwrap(), bake(&a.mesh, &two, &cfg).unwrap());
        for (x, y) in r1.albedo_uv.data().iter().zip(r2.albedo_uv.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        assert_eq!(r1.filled, r2.filled);
    }

    #[test]
    fn view_order_does_not_change_seen_texels() {
        let a = fixtures::sphere();
        let views = views_of(&a, &[2, 3, 6], 48);
        let base = BakeConfig { texture_resolution: 64, seam_dilation: 0, ..Default::default() };
        let r1 = bake(&a.mesh, &views, &base).unwrap();
        let r2 = bake(&a.mesh, &views, &BakeConfig { view_order: Some(vec![2, 0, 1]), ..base.clone() }).unwrap();
        for (x, y) in r1.albedo_uv.data().iter().zip(r2.albedo_uv.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        let r3 = bake(&a.mesh, &views, &base).unwrap();
        assert_eq!(r1.albedo_uv, r3.albedo_uv);
    }

    #[test]
    fn errors_and_assembly() {
        let a = red_quad();
        let cfg = BakeConfig { texture_resolution: 64, ..Default::default() };
        assert!(matches!(bake(&a.mesh, &[], &cfg), Err(BakeError::EmptyViews)));
        assert!(BakeConfig { texture_resolution: 96, ..Default::default() }.validate().is_err());
        // The back view sees only the back of a one-sided quad.
        let r = bake(&a.mesh, &views_of(&a, &[4], 64), &cfg).unwrap();
        assert_eq!(r.unseen_texel_count, r.occupied_texel_count);
        let m = TextureMap::constant(&[0.0]);
        assert!(matches!(assemble_asset(&a.mesh, &r, m.clone(), m.clone(), 2.5), Err(BakeError::UncoveredSurface { .. })));
        let r = bake(&a.mesh, &views_of(&a, &[2], 64), &cfg).unwrap();
        let out = assemble_asset(&a.mesh, &r, m.clone(), m, 2.5).unwrap();
        assert_eq!(out.materials.emission_strength, 2.5);
        let bad = TextureMap::filled(32, 32, &[0.0]);
        assert!(matches!(
            assemble_asset(&a.mesh, &r, bad, TextureMap::constant(&[0.5]), 1.0),
            Err(BakeError::ResolutionMismatch(_))
        ));
    }
}
