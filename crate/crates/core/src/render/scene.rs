//! Ray-traceable scene built from an asset: triangle BVH, shading lookups and
//! the emissive-triangle sampling distribution.

use crate::asset::{Asset, MaterialSet};

use super::camera::V3;
use super::RenderError;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct BvhNode {
    min: V3,
    max: V3,
    /// Index of the left child for interior nodes, first primitive for leaves.
    start: u32,
    /// Primitive count for leaves, 0 for interior nodes.
    count: u32,
}

#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: f64,
    pub tri: usize,
    pub b1: f64,
    pub b2: f64,
}

/// Material and geometry at a surface point.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint {
    pub position: V3,
    /// Interpolated vertex normal, unit length, as authored.
    pub normal: V3,
    pub geometric_normal: V3,
    pub uv: [f64; 2],
    pub albedo: [f32; 3],
    pub metallic: f32,
    pub roughness: f32,
    /// Emission map sample before strength scaling.
    pub emission: [f32; 3],
}

pub struct Scene {
    positions: Vec<V3>,
    normals: Vec<V3>,
    uvs: Vec<[f64; 2]>,
    tris: Vec<[u32; 3]>,
    face_normals: Vec<V3>,
    order: Vec<u32>,
    nodes: Vec<BvhNode>,
    materials: MaterialSet,
    pub center: V3,
    pub radius: f64,
    pub bounds_min: V3,
    pub bounds_max: V3,
    /// Scale for ray offsets.
    pub epsilon: f64,
    emitters: Vec<usize>,
    emitter_cdf: Vec<f64>,
    emitter_area: f64,
    emitter_weight: f64,
}

impl Scene {
    pub fn new(asset: &Asset) -> Result<Self, RenderError> {
        let mesh = &asset.mesh;
        let positions: Vec<V3> =
            mesh.positions().iter().map(|p| V3::new(p[0] as f64, p[1] as f64, p[2] as f64)).collect();
        let normals: Vec<V3> =
            mesh.normals().iter().map(|n| V3::new(n[0] as f64, n[1] as f64, n[2] as f64).normalize()).collect();
        let uvs: Vec<[f64; 2]> = mesh.uvs().iter().map(|u| [u[0] as f64, u[1] as f64]).collect();
        let tris = mesh.triangles().to_vec();
        let face_normals: Vec<V3> = tris
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| positions[i as usize]);
                (b - a).cross(&(c - a))
            })
            .collect();
        if face_normals.iter().all(|n| n.norm() == 0.0) {
            return Err(RenderError::DegenerateMesh);
        }
        let face_normals: Vec<V3> =
            face_normals.into_iter().map(|n| if n.norm() > 0.0 { n.normalize() } else { V3::zeros() }).collect();
        let bounds = mesh.bounds();
        let bounds_min = V3::from(bounds.min);
        let bounds_max = V3::from(bounds.max);
        let (center, radius) = mesh.bounding_sphere();
        let diameter = bounds.diagonal().max(1e-9);

        let mut scene = Self {
            positions,
            normals,
            uvs,
            tris,
            face_normals,
            order: Vec::new(),
            nodes: Vec::new(),
            materials: asset.materials.clone(),
            center: V3::from(center),
            radius,
            bounds_min,
            bounds_max,
            epsilon: 1e-5 * diameter,
            emitters: Vec::new(),
            emitter_cdf: Vec::new(),
            emitter_area: 0.0,
            emitter_weight: 0.0,
        };
        scene.build_bvh();
        scene.collect_emitters(asset);
        Ok(scene)
    }

    pub fn diameter(&self) -> f64 {
        (self.bounds_max - self.bounds_min).norm()
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    fn tri_bounds(&self, t: usize) -> (V3, V3) {
        let [a, b, c] = self.tris[t].map(|i| self.positions[i as usize]);
        (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
    }

    fn build_bvh(&mut self) {
        let n = self.tris.len();
        let centroids: Vec<V3> = (0..n)
            .map(|t| {
                let (lo, hi) = self.tri_bounds(t);
                (lo + hi) * 0.5
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        nodes.push(BvhNode { min: V3::zeros(), max: V3::zeros(), start: 0, count: 0 });
        let mut stack = vec![(0usize, 0usize, n)];
        while let Some((node, lo, hi)) = stack.pop() {
            let (mut bmin, mut bmax) = (V3::repeat(f64::INFINITY), V3::repeat(f64::NEG_INFINITY));
            let (mut cmin, mut cmax) = (bmin, bmax);
            for &t in &order[lo..hi] {
                let (a, b) = self.tri_bounds(t as usize);
                bmin = bmin.inf(&a);
                bmax = bmax.sup(&b);
                cmin = cmin.inf(&centroids[t as usize]);
                cmax = cmax.sup(&centroids[t as usize]);
            }
            nodes[node].min = bmin;
            nodes[node].max = bmax;
            let extent = cmax - cmin;
            let axis = extent.imax();
            if hi - lo <= LEAF_SIZE || extent[axis] <= 0.0 {
                nodes[node].start = lo as u32;
                nodes[node].count = (hi - lo) as u32;
                continue;
            }
            let mid = (lo + hi) / 2;
            order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
            });
            let left = nodes.len();
            nodes.push(BvhNode { min: V3::zeros(), max: V3::zeros(), start: 0, count: 0 });
            nodes.push(BvhNode { min: V3::zeros(), max: V3::zeros(), start: 0, count: 0 });
            nodes[node].start = left as u32;
            nodes[node].count = 0;
            stack.push((left + 1, mid, hi));
            stack.push((left, lo, mid));
        }
        self.order = order;
        self.nodes = nodes;
    }

    fn collect_emitters(&mut self, asset: &Asset) {
        let em = &asset.materials.emission;
        let mut emitters = Vec::new();
        for t in 0..self.tris.len() {
            if self.face_normals[t] == V3::zeros() {
                continue;
            }
            let emissive = if em.is_constant() || self.uvs.is_empty() {
                em.rgb(0, 0).iter().any(|&v| v > 0.0)
            } else {
                let uv = self.tris[t].map(|i| self.uvs[i as usize]);
                texel_box_any(em, uv)
            };
            if emissive {
                emitters.push(t);
            }
        }
        // Selection weight: area times mean emitted luminance over the
        // triangle corners and centroid, floored so that no emitting point
        // has zero density.
        let floor = 0.05 * em.luminance().into_iter().fold(0.0, f64::max);
        let weights: Vec<f64> = emitters
            .iter()
            .map(|&t| {
                let [a, b, c] = self.tris[t].map(|i| self.uv_at(i as usize));
                let g = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                let mean = [a, b, c, g]
                    .iter()
                    .map(|uv| crate::asset::luminance_rgb(em.sample_bilinear(uv[0], uv[1])))
                    .sum::<f64>()
                    / 4.0;
                self.area(t) * (mean + floor)
            })
            .collect();
        let mut acc = 0.0;
        let cdf: Vec<f64> = weights
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
        self.emitter_weight = acc;
        self.emitter_area = emitters.iter().map(|&t| self.area(t)).sum();
        self.emitters = emitters;
        self.emitter_cdf = cdf;
    }

    fn uv_at(&self, i: usize) -> [f64; 2] {
        if self.uvs.is_empty() {
            [0.0, 0.0]
        } else {
            self.uvs[i]
        }
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tris[t].map(|i| self.positions[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn has_emitters(&self) -> bool {
        self.emitter_area > 0.0
    }

    pub fn emitter_count(&self) -> usize {
        self.emitters.len()
    }

    /// Picks an emissive triangle with probability proportional to its
    /// emitted power and a uniform point on it. Returns the point and its
    /// area density.
    pub fn sample_emitter(&self, u_pick: f64, u1: f64, u2: f64) -> Option<(SurfacePoint, f64)> {
        if !self.has_emitters() || self.emitter_weight <= 0.0 {
            return None;
        }
        let target = u_pick * self.emitter_weight;
        let k = self.emitter_cdf.partition_point(|&c| c <= target).min(self.emitters.len() - 1);
        let t = self.emitters[k];
        let w = self.emitter_cdf[k] - if k > 0 { self.emitter_cdf[k - 1] } else { 0.0 };
        let s = u1.sqrt();
        let (b1, b2) = (s * (1.0 - u2), s * u2);
        let pdf = w / (self.emitter_weight * self.area(t));
        Some((self.surface(&Hit { t: 0.0, tri: t, b1, b2 }), pdf))
    }

    pub fn is_emitter(&self, tri: usize) -> bool {
        self.emitters.binary_search(&tri).is_ok()
    }

    fn intersect_tri(&self, t: usize, o: &V3, d: &V3, t_max: f64) -> Option<(f64, f64, f64)> {
        let [a, b, c] = self.tris[t].map(|i| self.positions[i as usize]);
        let e1 = b - a;
        let e2 = c - a;
        let p = d.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-300 {
            return None;
        }
        let inv = 1.0 / det;
        let s = o - a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = d.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let tt = e2.dot(&q) * inv;
        (tt > 0.0 && tt < t_max).then_some((tt, u, v))
    }

    fn slab(node: &BvhNode, o: &V3, inv_d: &V3, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (node.min[k] - o[k]) * inv_d[k];
            let b = (node.max[k] - o[k]) * inv_d[k];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    fn traverse(&self, o: &V3, d: &V3, mut t_max: f64, any: bool) -> Option<Hit> {
        if self.nodes.is_empty() || self.tris.is_empty() {
            return None;
        }
        let inv_d = V3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut best: Option<Hit> = None;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !Self::slab(node, o, &inv_d, t_max) {
                continue;
            }
            if node.count > 0 {
                let start = node.start as usize;
                for &t in &self.order[start..start + node.count as usize] {
                    if let Some((tt, b1, b2)) = self.intersect_tri(t as usize, o, d, t_max) {
                        // Ties break towards the lower triangle index so the
                        // result does not depend on traversal order.
                        let better = match &best {
                            Some(h) => tt < h.t || (tt == h.t && (t as usize) < h.tri),
                            None => true,
                        };
                        if better {
                            t_max = tt;
                            best = Some(Hit { t: tt, tri: t as usize, b1, b2 });
                            if any {
                                return best;
                            }
                        }
                    }
                }
            } else if sp + 2 <= stack.len() {
                stack[sp] = node.start;
                stack[sp + 1] = node.start + 1;
                sp += 2;
            }
        }
        best
    }

    /// Closest hit along `d` (unit) from `o`.
    pub fn intersect(&self, o: &V3, d: &V3) -> Option<Hit> {
        self.traverse(o, d, f64::INFINITY, false)
    }

    /// True when something blocks the open segment from `o` along unit `d`
    /// up to distance `dist`.
    pub fn occluded(&self, o: &V3, d: &V3, dist: f64) -> bool {
        self.traverse(o, d, dist, true).is_some()
    }

    /// Interpolated geometry and material lookups at a hit.
    pub fn surface(&self, hit: &Hit) -> SurfacePoint {
        let [i0, i1, i2] = self.tris[hit.tri].map(|i| i as usize);
        let b0 = 1.0 - hit.b1 - hit.b2;
        let position = self.positions[i0] * b0 + self.positions[i1] * hit.b1 + self.positions[i2] * hit.b2;
        let gn = self.face_normals[hit.tri];
        let n = self.normals[i0] * b0 + self.normals[i1] * hit.b1 + self.normals[i2] * hit.b2;
        let normal = if n.norm() > 1e-12 { n.normalize() } else { gn };
        let uv = if self.uvs.is_empty() {
            [0.0, 0.0]
        } else {
            let (a, b, c) = (self.uvs[i0], self.uvs[i1], self.uvs[i2]);
            [
                a[0] * b0 + b[0] * hit.b1 + c[0] * hit.b2,
                a[1] * b0 + b[1] * hit.b1 + c[1] * hit.b2,
            ]
        };
        let m = &self.materials;
        SurfacePoint {
            position,
            normal,
            geometric_normal: gn,
            uv,
            albedo: m.albedo.sample_bilinear(uv[0], uv[1]),
            metallic: m.metallic.sample_bilinear(uv[0], uv[1])[0],
            roughness: m.roughness.sample_bilinear(uv[0], uv[1])[0],
            emission: m.emission.sample_bilinear(uv[0], uv[1]),
        }
    }
}

/// True when any texel that bilinear sampling can touch inside the triangle's
/// UV bounding box is non-zero.
fn texel_box_any(map: &crate::asset::TextureMap, uv: [[f64; 2]; 3]) -> bool {
    let (w, h) = (map.width() as i64, map.height() as i64);
    let umin = uv.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let umax = uv.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let vmin = uv.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let vmax = uv.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (umin * w as f64 - 0.5).floor() as i64;
    let x1 = (umax * w as f64 - 0.5).floor() as i64 + 1;
    let y0 = (vmin * h as f64 - 0.5).floor() as i64;
    let y1 = (vmax * h as f64 - 0.5).floor() as i64 + 1;
    if x1 - x0 >= w && y1 - y0 >= h {
        return map.data().iter().any(|&v| v > 0.0);
    }
    for y in y0..=y1.min(y0 + h - 1) {
        for x in x0..=x1.min(x0 + w - 1) {
            let t = map.texel(x.rem_euclid(w) as u32, y.rem_euclid(h) as u32);
            if t.iter().any(|&v| v > 0.0) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::{Mesh, TextureMap};

    fn two_quads() -> Asset {
        // Front quad at z = 0 and a second quad behind it at z = -1.
        let p = vec![
            [-1.0, -1.0, 0.0],
            [1.0, -1.0, 0.0],
            [1.0, 1.0, 0.0],
            [-1.0, 1.0, 0.0],
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
        ];
        let uv = vec![
            [0.1, 0.9],
            [0.35, 0.9],
            [0.35, 0.1],
            [0.1, 0.1],
            [0.6, 0.9],
            [0.9, 0.9],
            [0.9, 0.1],
            [0.6, 0.1],
        ];
        let mesh = Mesh::with_computed_normals(p, uv, vec![[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]).unwrap();
        let mut m = MaterialSet::constant([0.5; 3], 0.0, 0.5);
        m.emission = TextureMap::from_fn(8, 8, 3, |x, _| if x >= 4 { [1.0; 3] } else { [0.0; 3] });
        m.emission_strength = 1.0;
        Asset::new("q", mesh, m, vec![]).unwrap()
    }

    #[test]
    fn closest_hit_and_occlusion() {
        let s = Scene::new(&two_quads()).unwrap();
        let o = V3::new(0.1, 0.2, 5.0);
        let d = V3::new(0.0, 0.0, -1.0);
        let hit = s.intersect(&o, &d).unwrap();
        assert!((hit.t - 5.0).abs() < 1e-12);
        assert!(hit.tri < 2);
        assert!(s.occluded(&o, &d, 5.5));
        assert!(!s.occluded(&o, &d, 4.9));
        assert!(s.intersect(&o, &V3::new(0.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn brute_force_agrees_with_bvh() {
        let mut p = Vec::new();
        let mut tris = Vec::new();
        for i in 0..200u32 {
            let f = i as f32 * 0.37;
            let base = [f.sin() * 2.0, (f * 1.3).cos() * 2.0, (f * 0.7).sin() * 2.0];
            p.push(base);
            p.push([base[0] + 0.3, base[1], base[2] + 0.1]);
            p.push([base[0], base[1] + 0.3, base[2] - 0.1]);
            tris.push([3 * i, 3 * i + 1, 3 * i + 2]);
        }
        let mesh = Mesh::with_computed_normals(p, vec![], tris).unwrap();
        let asset = Asset::new("soup", mesh, MaterialSet::constant([0.5; 3], 0.0, 0.5), vec![]).unwrap();
        let s = Scene::new(&asset).unwrap();
        for k in 0..300 {
            let a = k as f64 * 0.7;
            let o = V3::new(a.cos() * 6.0, (a * 0.3).sin() * 3.0, a.sin() * 6.0);
            let d = (V3::new((a * 1.7).sin() * 0.5, 0.0, (a * 2.3).cos() * 0.5) - o).normalize();
            let brute = (0..s.tris.len())
                .filter_map(|t| s.intersect_tri(t, &o, &d, f64::INFINITY).map(|h| (h.0, t)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = s.intersect(&o, &d).map(|h| (h.t, h.tri));
            assert_eq!(got, brute);
        }
    }

    #[test]
    fn emitters_follow_emission_texels() {
        let s = Scene::new(&two_quads()).unwrap();
        assert!(!s.is_emitter(0) && !s.is_emitter(1));
        assert!(s.is_emitter(2) && s.is_emitter(3));
        let (p, pdf) = s.sample_emitter(0.3, 0.4, 0.5).unwrap();
        assert!((p.position.z + 1.0).abs() < 1e-12);
        assert!((pdf - 0.25).abs() < 1e-9, "{pdf}");
    }
}
