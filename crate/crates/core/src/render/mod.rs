//! CPU path tracer for emissive assets: canonical cameras, randomized light
//! rigs, beauty pass with bloom, and deterministic AOV passes.

mod bloom;
mod brdf;
mod camera;
mod lights;
mod output;
mod scene;

pub use bloom::{apply_bloom, BloomConfig};
pub use brdf::Brdf;
pub use camera::{canonical_views, diagonal_elevation_deg, framing_distance, Camera, ViewSpec, V3};
pub use lights::{
    sample_light_rig, AreaLight, LightRig, PointLight, AREA_POWER_RANGE, ENV_RANGE, POINT_POWER_TOTAL,
};
pub use output::{
    load_rendered_view, read_render_manifest, strength_dir_name, write_render_set, ManifestEntry, RenderManifest,
    PASS_NAMES,
};
pub use scene::{Hit, Scene, SurfacePoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{Asset, AssetError, TextureMap};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("mesh has no triangle with non-zero area")]
    DegenerateMesh,
    #[error("invalid view: {0}")]
    InvalidView(String),
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("render manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub samples_per_pixel: u32,
    pub max_bounces: u32,
    pub bloom: BloomConfig,
    pub seed: u64,
    /// Square image size for canonical views.
    pub resolution: u32,
    /// Vertical field of view in degrees for canonical views.
    pub fov: f64,
    /// Camera distance as a multiple of the distance that just fits the
    /// bounding sphere.
    pub framing_margin: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            samples_per_pixel: 64,
            max_bounces: 3,
            bloom: BloomConfig::default(),
            seed: 0,
            resolution: 256,
            fov: 40.0,
            framing_margin: 1.1,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.samples_per_pixel < 1 {
            return Err(RenderError::InvalidConfig("samples_per_pixel must be >= 1".into()));
        }
        if self.max_bounces < 1 {
            return Err(RenderError::InvalidConfig("max_bounces must be >= 1".into()));
        }
        if self.resolution < 16 {
            return Err(RenderError::InvalidConfig("resolution must be >= 16".into()));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) || !(self.framing_margin > 0.0) {
            return Err(RenderError::InvalidConfig("fov must be in (0, 180) and framing_margin > 0".into()));
        }
        let b = &self.bloom;
        if !(b.threshold >= 0.0 && b.sigma_fraction > 0.0 && b.gain >= 0.0) {
            return Err(RenderError::InvalidConfig("bloom threshold/gain must be >= 0, sigma_fraction > 0".into()));
        }
        Ok(())
    }

    /// The ten canonical views framing a scene.
    pub fn views_for(&self, scene: &Scene) -> Vec<ViewSpec> {
        canonical_views(framing_distance(scene.radius, self.fov, self.framing_margin), self.fov, self.resolution)
    }
}

/// Lighting-independent passes from the pixel-centre primary ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Aovs {
    pub albedo: TextureMap,
    /// Emission map sample × strength.
    pub emission: TextureMap,
    pub normal: TextureMap,
    pub position: TextureMap,
    pub coverage: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub view: ViewSpec,
    pub strength: f64,
    pub rig_index: usize,
    /// Linear HDR radiance after bloom.
    pub beauty: TextureMap,
    pub albedo_pass: TextureMap,
    pub emission_pass: TextureMap,
    pub normal_pass: TextureMap,
    pub position_pass: TextureMap,
    pub coverage: Vec<bool>,
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_rng(seed: u64, view_key: u64, pixel: u64, sample: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(mix64(mix64(seed ^ view_key) ^ pixel) ^ sample))
}

fn to3(v: &V3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

/// Renders the AOV passes of one view. Pixels without geometry are zero.
pub fn render_aovs(scene: &Scene, view: &ViewSpec, strength: f64) -> Result<Aovs, RenderError> {
    view.validate()?;
    let cam = Camera::new(view, scene.center);
    let n = view.resolution as usize;
    let rows: Vec<Vec<([f32; 3], [f32; 3], [f32; 3], [f32; 3], bool)>> = (0..n)
        .into_par_iter()
        .map(|y| {
            (0..n)
                .map(|x| {
                    let d = cam.ray_dir(x as f64 + 0.5, y as f64 + 0.5);
                    match scene.intersect(&cam.origin, &d) {
                        Some(hit) => {
                            let sp = scene.surface(&hit);
                            let e = sp.emission.map(|c| (c as f64 * strength) as f32);
                            (sp.albedo, e, to3(&sp.normal), to3(&sp.position), true)
                        }
                        None => ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3], false),
                    }
                })
                .collect()
        })
        .collect();
    let px: Vec<_> = rows.into_iter().flatten().collect();
    let pass = |f: &dyn Fn(&([f32; 3], [f32; 3], [f32; 3], [f32; 3], bool)) -> [f32; 3]| {
        let data = px.iter().flat_map(f).collect();
        TextureMap::new(view.resolution, view.resolution, 3, data)
    };
    Ok(Aovs {
        albedo: pass(&|p| p.0)?,
        emission: pass(&|p| p.1)?,
        normal: pass(&|p| p.2)?,
        position: pass(&|p| p.3)?,
        coverage: px.iter().map(|p| p.4).collect(),
    })
}

struct Tracer<'a> {
    scene: &'a Scene,
    rig: &'a LightRig,
    strength: f64,
    max_bounces: u32,
    area_frame: (V3, V3, V3),
}

impl Tracer<'_> {
    fn radiance(&self, mut o: V3, mut d: V3, rng: &mut ChaCha8Rng) -> V3 {
        let scene = self.scene;
        let eps = scene.epsilon;
        let mut l = V3::zeros();
        let mut beta = V3::repeat(1.0);
        for depth in 0..=self.max_bounces {
            // A fixed number of draws per vertex keeps streams aligned across
            // strengths and rigs.
            let u: [f64; 8] = std::array::from_fn(|_| rng.random());
            let Some(hit) = scene.intersect(&o, &d) else {
                l += beta * self.rig.env_intensity;
                break;
            };
            if depth == self.max_bounces {
                break;
            }
            let sp = scene.surface(&hit);
            let wo = -d;
            let mut ng = sp.geometric_normal;
            let mut n = sp.normal;
            if ng.dot(&wo) < 0.0 {
                ng = -ng;
            }
            if n.dot(&wo) < 0.0 {
                n = -n;
            }
            if depth == 0 && self.strength > 0.0 {
                let e = sp.emission;
                l += beta.component_mul(&V3::new(e[0] as f64, e[1] as f64, e[2] as f64)) * self.strength;
            }
            let brdf = Brdf::new(n, sp.albedo, sp.metallic, sp.roughness);
            let origin = sp.position + ng * eps;
            let mut direct = V3::zeros();

            for pl in &self.rig.point_lights {
                let to = V3::from(pl.position) - origin;
                let dist = to.norm();
                let wi = to / dist;
                let cos = n.dot(&wi);
                if cos > 0.0 && ng.dot(&wi) > 0.0 && !scene.occluded(&origin, &wi, dist) {
                    direct += brdf.eval(&wo, &wi) * (pl.intensity() * cos / (dist * dist));
                }
            }

            let area = &self.rig.area_light;
            if area.power > 0.0 && area.radius > 0.0 {
                let (an, at, ab) = self.area_frame;
                let r = area.radius * u[0].sqrt();
                let phi = std::f64::consts::TAU * u[1];
                let q = V3::from(area.center) + at * (r * phi.cos()) + ab * (r * phi.sin());
                let to = q - origin;
                let dist = to.norm();
                let wi = to / dist;
                let cos = n.dot(&wi);
                let cos_l = -an.dot(&wi);
                if cos > 0.0 && cos_l > 0.0 && ng.dot(&wi) > 0.0 && !scene.occluded(&origin, &wi, dist) {
                    direct += brdf.eval(&wo, &wi) * (area.radiance() * cos * cos_l * area.area() / (dist * dist));
                }
            }

            if self.strength > 0.0 {
                if let Some((q, pdf)) = scene.sample_emitter(u[2], u[3], u[4]) {
                    let to = q.position - origin;
                    let dist = to.norm();
                    if dist > eps {
                        let wi = to / dist;
                        let cos = n.dot(&wi);
                        let cos_l = q.geometric_normal.dot(&wi).abs();
                        let le = V3::new(q.emission[0] as f64, q.emission[1] as f64, q.emission[2] as f64)
                            * self.strength;
                        if cos > 0.0
                            && cos_l > 0.0
                            && ng.dot(&wi) > 0.0
                            && le.max() > 0.0
                            && !scene.occluded(&origin, &wi, dist - 2.0 * eps)
                        {
                            let g = cos * cos_l / (dist * dist * pdf);
                            direct += brdf.eval(&wo, &wi).component_mul(&le) * g;
                        }
                    }
                }
            }
            l += beta.component_mul(&direct);

            let Some(wi) = brdf.sample(&wo, u[5], u[6], u[7]) else { break };
            let pdf = brdf.pdf(&wo, &wi);
            if pdf <= 0.0 {
                break;
            }
            beta = beta.component_mul(&(brdf.eval(&wo, &wi) * (n.dot(&wi) / pdf)));
            if beta.max() <= 0.0 {
                break;
            }
            let side = if ng.dot(&wi) >= 0.0 { ng } else { -ng };
            o = sp.position + side * eps;
            d = wi;
        }
        l
    }
}

fn area_frame(rig: &LightRig) -> (V3, V3, V3) {
    let n = V3::from(rig.area_light.normal);
    let n = if n.norm() > 0.0 { n.normalize() } else { -V3::y() };
    let a = if n.x.abs() > 0.9 { V3::y() } else { V3::x() };
    let t = n.cross(&a).normalize();
    (n, t, n.cross(&t))
}

/// Renders one view of a prepared scene. The result depends only on the
/// inputs and `cfg.seed`, never on the thread schedule.
pub fn render_view_in_scene(
    scene: &Scene,
    view: &ViewSpec,
    rig: &LightRig,
    strength: f64,
    cfg: &RenderConfig,
) -> Result<RenderedView, RenderError> {
    cfg.validate()?;
    if !(strength.is_finite() && strength >= 0.0) {
        return Err(RenderError::InvalidConfig(format!("strength {strength} must be finite and >= 0")));
    }
    let aovs = render_aovs(scene, view, strength)?;
    let cam = Camera::new(view, scene.center);
    let n = view.resolution as usize;
    let key = view.key();
    let tracer = Tracer { scene, rig, strength, max_bounces: cfg.max_bounces, area_frame: area_frame(rig) };
    let spp = cfg.samples_per_pixel;
    let mut rgb: Vec<f64> = (0..n * n)
        .into_par_iter()
        .flat_map_iter(|p| {
            let (x, y) = ((p % n) as f64, (p / n) as f64);
            let mut acc = V3::zeros();
            for s in 0..spp {
                let mut rng = sample_rng(cfg.seed, key, p as u64, s as u64);
                let (jx, jy): (f64, f64) = (rng.random(), rng.random());
                let d = cam.ray_dir(x + jx, y + jy);
                acc += tracer.radiance(cam.origin, d, &mut rng);
            }
            let a = acc / spp as f64;
            [a.x, a.y, a.z]
        })
        .collect();
    apply_bloom(&mut rgb, n, n, &cfg.bloom);
    let beauty = TextureMap::new(view.resolution, view.resolution, 3, rgb.into_iter().map(|v| v as f32).collect())?;
    Ok(RenderedView {
        view: *view,
        strength,
        rig_index: 0,
        beauty,
        albedo_pass: aovs.albedo,
        emission_pass: aovs.emission,
        normal_pass: aovs.normal,
        position_pass: aovs.position,
        coverage: aovs.coverage,
    })
}

pub fn render_view(
    asset: &Asset,
    view: &ViewSpec,
    rig: &LightRig,
    strength: f64,
    cfg: &RenderConfig,
) -> Result<RenderedView, RenderError> {
    render_view_in_scene(&Scene::new(asset)?, view, rig, strength, cfg)
}

/// Renders the ten canonical views × `strengths` × `rigs`, ordered view-major,
/// then strength, then rig.
pub fn render_asset(
    asset: &Asset,
    strengths: &[f64],
    rigs: &[LightRig],
    cfg: &RenderConfig,
) -> Result<Vec<RenderedView>, RenderError> {
    cfg.validate()?;
    if strengths.is_empty() || rigs.is_empty() {
        return Ok(Vec::new());
    }
    let scene = Scene::new(asset)?;
    let views = cfg.views_for(&scene);
    let jobs: Vec<(usize, usize, usize)> = (0..views.len())
        .flat_map(|v| (0..strengths.len()).flat_map(move |s| (0..rigs.len()).map(move |r| (v, s, r))))
        .collect();
    jobs.par_iter()
        .map(|&(v, s, r)| {
            let mut out = render_view_in_scene(&scene, &views[v], &rigs[r], strengths[s], cfg)?;
            out.rig_index = r;
            Ok(out)
        })
        .collect()
}

/// Samples `count` rigs for a scene from a seed.
pub fn sample_rigs(scene: &Scene, count: usize, seed: u64) -> Vec<LightRig> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5249_4753));
    (0..count).map(|_| sample_light_rig(&mut rng, scene.center.into(), scene.radius)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::{MaterialSet, Mesh};

    fn emissive_quad(strength: f64) -> Asset {
        let mesh = Mesh::with_computed_normals(
            vec![[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]],
            vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let mut m = MaterialSet::constant([0.0; 3], 0.0, 1.0);
        m.emission = TextureMap::constant(&[0.8, 0.4, 0.2]);
        m.emission_strength = strength;
        Asset::new("q", mesh, m, vec![]).unwrap()
    }

    fn small_cfg() -> RenderConfig {
        RenderConfig { samples_per_pixel: 2, resolution: 17, ..Default::default() }
    }

    #[test]
    fn black_emitter_shows_exact_emitted_radiance() {
        let asset = emissive_quad(1.0);
        let cfg = RenderConfig { bloom: BloomConfig { gain: 0.0, ..Default::default() }, ..small_cfg() };
        let scene = Scene::new(&asset).unwrap();
        let view = &cfg.views_for(&scene)[2];
        let a = render_view_in_scene(&scene, view, &LightRig::dark(), 1.5, &cfg).unwrap();
        let b = render_view_in_scene(&scene, view, &LightRig::dark(), 3.0, &cfg).unwrap();
        let c = a.beauty.rgb(8, 8);
        assert_eq!(c, [(0.8f32 as f64 * 1.5) as f32, (0.4f32 as f64 * 1.5) as f32, (0.2f32 as f64 * 1.5) as f32]);
        let c2 = b.beauty.rgb(8, 8);
        for k in 0..3 {
            assert_eq!(c2[k], (c[k] as f64 * 2.0) as f32);
        }
    }

    #[test]
    fn output_ordering_and_determinism() {
        let asset = emissive_quad(1.0);
        let cfg = small_cfg();
        let scene = Scene::new(&asset).unwrap();
        let rigs = sample_rigs(&scene, 2, 3);
        let a = render_asset(&asset, &[1.0, 2.0], &rigs, &cfg).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!((a[0].strength, a[0].rig_index), (1.0, 0));
        assert_eq!((a[1].strength, a[1].rig_index), (1.0, 1));
        assert_eq!((a[2].strength, a[2].rig_index), (2.0, 0));
        assert_eq!(a[4].view.name(), "bottom");
        let b = render_asset(&asset, &[1.0, 2.0], &rigs, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(render_asset(&asset, &[], &rigs, &cfg).unwrap().is_empty());
    }

    #[test]
    fn thread_count_does_not_change_pixels() {
        let asset = emissive_quad(2.0);
        let cfg = small_cfg();
        let scene = Scene::new(&asset).unwrap();
        let rig = sample_rigs(&scene, 1, 9).remove(0);
        let view = cfg.views_for(&scene)[6];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| render_view_in_scene(&scene, &view, &rig, 2.0, &cfg).unwrap());
        let b = render_view_in_scene(&scene, &view, &rig, 2.0, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
