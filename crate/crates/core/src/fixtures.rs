//! Procedural fixture assets bundled with the crate (see `fixtures/*.glb`).
//!
//! - `quad`: two-triangle unit quad, no emission.
//! - `sphere`: UV sphere with smooth albedo and a soft emissive spot.
//! - `led_panel_wall`: white wall slab framed by emissive bars on all four
//!   edges; the bars protrude on both sides so they are visible from every
//!   canonical view.
//! - `multi_object_pair`: two separated boxes tagged as multiple objects.

use std::f32::consts::PI;
use std::path::Path;

use crate::asset::{save_asset, Asset, AssetError, MaterialSet, Mesh, TextureMap};

pub const FIXTURE_NAMES: [&str; 4] = ["quad", "sphere", "led_panel_wall", "multi_object_pair"];

#[derive(Default)]
struct MeshBuilder {
    positions: Vec<[f32; 3]>,
    uvs: Vec<[f32; 2]>,
    triangles: Vec<[u32; 3]>,
}

/// UV rectangle `[u0, v0, u1, v1]`.
type UvRect = [f32; 4];

impl MeshBuilder {
    /// Adds a `nx × ny` grid over the parallelogram `origin + s·du + t·dv`,
    /// wound so the face normal is `du × dv`.
    fn grid(&mut self, origin: [f32; 3], du: [f32; 3], dv: [f32; 3], nx: u32, ny: u32, uv: UvRect) {
        let base = self.positions.len() as u32;
        for j in 0..=ny {
            for i in 0..=nx {
                let (s, t) = (i as f32 / nx as f32, j as f32 / ny as f32);
                self.positions.push([
                    origin[0] + s * du[0] + t * dv[0],
                    origin[1] + s * du[1] + t * dv[1],
                    origin[2] + s * du[2] + t * dv[2],
                ]);
                self.uvs.push([uv[0] + s * (uv[2] - uv[0]), uv[3] + t * (uv[1] - uv[3])]);
            }
        }
        let row = nx + 1;
        for j in 0..ny {
            for i in 0..nx {
                let a = base + j * row + i;
                self.triangles.push([a, a + 1, a + row + 1]);
                self.triangles.push([a, a + row + 1, a + row]);
            }
        }
    }

    /// Axis-aligned box with outward faces, all mapped to `uv`, each face
    /// subdivided `n × n`.
    fn cuboid(&mut self, min: [f32; 3], max: [f32; 3], n: u32, uv: UvRect) {
        let [x0, y0, z0] = min;
        let [x1, y1, z1] = max;
        let (dx, dy, dz) = (x1 - x0, y1 - y0, z1 - z0);
        self.grid([x0, y0, z1], [dx, 0.0, 0.0], [0.0, dy, 0.0], n, n, uv); // +Z
        self.grid([x1, y0, z0], [-dx, 0.0, 0.0], [0.0, dy, 0.0], n, n, uv); // -Z
        self.grid([x1, y0, z1], [0.0, 0.0, -dz], [0.0, dy, 0.0], n, n, uv); // +X
        self.grid([x0, y0, z0], [0.0, 0.0, dz], [0.0, dy, 0.0], n, n, uv); // -X
        self.grid([x0, y1, z1], [dx, 0.0, 0.0], [0.0, 0.0, -dz], n, n, uv); // +Y
        self.grid([x0, y0, z0], [dx, 0.0, 0.0], [0.0, 0.0, dz], n, n, uv); // -Y
    }

    fn build(self) -> Result<Mesh, AssetError> {
        Mesh::with_computed_normals(self.positions, self.uvs, self.triangles)
    }
}

pub fn quad() -> Asset {
    let mut b = MeshBuilder::default();
    b.grid([-0.5, -0.5, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1, 1, [0.0, 0.0, 1.0, 1.0]);
    let mesh = b.build().expect("quad mesh is valid");
    Asset::new("quad", mesh, MaterialSet::constant([0.8, 0.8, 0.8], 0.0, 0.5), vec!["single".into()])
        .expect("quad asset is valid")
}

/// Sphere albedo as a function of texture coordinates; smooth and periodic
/// in `u`.
pub fn sphere_albedo(u: f32, v: f32) -> [f32; 3] {
    let a = 2.0 * PI * u;
    [0.45 + 0.3 * a.sin(), 0.45 + 0.3 * a.cos() * (PI * v).sin(), 0.25 + 0.5 * v]
}

/// Sphere emission: a warm spot centred at `(u, v) = (0.5, 0.5)` with a
/// raised-cosine falloff reaching zero at distance 0.2 in UV space.
pub fn sphere_emission(u: f32, v: f32) -> [f32; 3] {
    let r = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
    if r >= SPHERE_SPOT_RADIUS {
        return [0.0; 3];
    }
    let w = 0.5 * (1.0 + (PI * r / SPHERE_SPOT_RADIUS).cos());
    [w, 0.7 * w, 0.3 * w]
}

pub const SPHERE_SPOT_RADIUS: f32 = 0.2;

pub const SPHERE_TEXTURE_SIZE: u32 = 128;

pub fn sphere() -> Asset {
    let (seg, rings) = (64u32, 32u32);
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..=rings {
        let v = j as f32 / rings as f32;
        let theta = v * PI;
        for i in 0..=seg {
            let u = i as f32 / seg as f32;
            let phi = u * 2.0 * PI;
            positions.push([theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos()]);
            uvs.push([u, v]);
        }
    }
    let row = seg + 1;
    let mut triangles = Vec::new();
    for j in 0..rings {
        for i in 0..seg {
            let a = j * row + i;
            if j > 0 {
                triangles.push([a, a + row, a + 1]);
            }
            if j + 1 < rings {
                triangles.push([a + 1, a + row, a + row + 1]);
            }
        }
    }
    // Exact unit normals at the vertices of a unit sphere.
    let normals = positions
        .iter()
        .map(|p: &[f32; 3]| {
            let l = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [p[0] / l, p[1] / l, p[2] / l]
        })
        .collect();
    let mesh = Mesh::new(positions, normals, uvs, triangles).expect("sphere mesh is valid");
    let n = SPHERE_TEXTURE_SIZE;
    let at = |x: u32, y: u32| ((x as f32 + 0.5) / n as f32, (y as f32 + 0.5) / n as f32);
    let materials = MaterialSet {
        albedo: TextureMap::from_fn(n, n, 3, |x, y| {
            let (u, v) = at(x, y);
            sphere_albedo(u, v)
        }),
        metallic: TextureMap::from_fn(n, n, 1, |_, y| [0.1 + 0.2 * at(0, y).1; 3]),
        roughness: TextureMap::from_fn(n, n, 1, |x, _| [0.5 + 0.3 * at(x, 0).0; 3]),
        emission: TextureMap::from_fn(n, n, 3, |x, y| {
            let (u, v) = at(x, y);
            sphere_emission(u, v)
        }),
        emission_strength: 2.0,
    };
    Asset::new("sphere", mesh, materials, vec!["single".into()]).expect("sphere asset is valid")
}

const ATLAS: u32 = 64;
const TILE: u32 = ATLAS / 2;

/// UV rectangle of atlas tile `k` (0 top-left, 1 top-right, 2 bottom-left,
/// 3 bottom-right), inset so bilinear lookups never reach a neighbour tile.
fn tile_uv(k: u32) -> UvRect {
    let inset = 1.5 / ATLAS as f32;
    let (tx, ty) = ((k % 2) as f32 * 0.5, (k / 2) as f32 * 0.5);
    [tx + inset, ty + inset, tx + 0.5 - inset, ty + 0.5 - inset]
}

pub const WALL_TILE: u32 = 0;
pub const BAR_TILE: u32 = 2;

/// Wall-facing extent of the panel: `x ∈ [-1, 1]`, `y ∈ [-0.6, 0.6]`, front
/// face at `z = 0.05`.
pub const WALL_HALF_EXTENT: [f32; 2] = [1.0, 0.6];
pub const WALL_FRONT_Z: f32 = 0.05;

pub fn led_panel_wall() -> Asset {
    let [hx, hy] = WALL_HALF_EXTENT;
    let z = WALL_FRONT_Z;
    let mut b = MeshBuilder::default();
    // Finely tessellated front of the wall so shading follows the glow.
    b.grid([-hx, -hy, z], [2.0 * hx, 0.0, 0.0], [0.0, 2.0 * hy, 0.0], 24, 16, tile_uv(WALL_TILE));
    b.grid([hx, -hy, -z], [-2.0 * hx, 0.0, 0.0], [0.0, 2.0 * hy, 0.0], 8, 6, tile_uv(1));
    let (t, d) = (0.1, 0.1);
    let bar = tile_uv(BAR_TILE);
    b.cuboid([-hx - t, hy, -d], [hx + t, hy + t, d], 2, bar);
    b.cuboid([-hx - t, -hy - t, -d], [hx + t, -hy, d], 2, bar);
    b.cuboid([-hx - t, -hy, -d], [-hx, hy, d], 2, bar);
    b.cuboid([hx, -hy, -d], [hx + t, hy, d], 2, bar);
    let mesh = b.build().expect("panel mesh is valid");

    let tile = |x: u32, y: u32| (y / TILE) * 2 + x / TILE;
    let albedo = TextureMap::from_fn(ATLAS, ATLAS, 3, |x, y| match tile(x, y) {
        0 => [0.9, 0.9, 0.9],
        1 => [0.55, 0.5, 0.45],
        2 => [0.15, 0.15, 0.18],
        _ => [0.2, 0.35, 0.7],
    });
    // The bar tile emits with a ramp along u so that dim texels cross the
    // luminous threshold only at higher strengths.
    let emission = TextureMap::from_fn(ATLAS, ATLAS, 3, |x, y| {
        if tile(x, y) == BAR_TILE {
            let s = (x % TILE) as f32 / (TILE - 1) as f32;
            let e = 0.002 + 0.998 * s.powi(3);
            [e, 0.9 * e, 0.7 * e]
        } else {
            [0.0; 3]
        }
    });
    let metallic = TextureMap::from_fn(ATLAS, ATLAS, 1, |x, y| [if tile(x, y) == BAR_TILE { 0.3 } else { 0.0 }; 3]);
    let roughness = TextureMap::from_fn(ATLAS, ATLAS, 1, |x, y| [if tile(x, y) == BAR_TILE { 0.35 } else { 0.9 }; 3]);
    let materials = MaterialSet { albedo, metallic, roughness, emission, emission_strength: 2.0 };
    Asset::new("led_panel_wall", mesh, materials, vec!["single".into(), "led".into(), "panel".into()])
        .expect("panel asset is valid")
}

pub fn multi_object_pair() -> Asset {
    let mut b = MeshBuilder::default();
    b.cuboid([-1.0, -0.3, -0.3], [-0.4, 0.3, 0.3], 6, tile_uv(0));
    b.cuboid([0.4, -0.3, -0.3], [1.0, 0.3, 0.3], 6, tile_uv(3));
    let mesh = b.build().expect("pair mesh is valid");
    let tile = |x: u32, y: u32| (y / TILE) * 2 + x / TILE;
    let albedo = TextureMap::from_fn(ATLAS, ATLAS, 3, |x, y| match tile(x, y) {
        0 => [0.8, 0.2, 0.2],
        1 => [0.2, 0.8, 0.2],
        2 => [0.9, 0.9, 0.9],
        _ => [0.2, 0.2, 0.8],
    });
    let emission = TextureMap::from_fn(ATLAS, ATLAS, 3, |x, y| if tile(x, y) == 3 { [0.9, 0.9, 1.0] } else { [0.0; 3] });
    let metallic = TextureMap::from_fn(ATLAS, ATLAS, 1, |x, _| [if x < TILE { 0.0 } else { 0.5 }; 3]);
    let roughness = TextureMap::from_fn(ATLAS, ATLAS, 1, |_, y| [if y < TILE { 0.4 } else { 0.7 }; 3]);
    let materials = MaterialSet { albedo, metallic, roughness, emission, emission_strength: 1.5 };
    Asset::new("multi_object_pair", mesh, materials, vec!["multiple".into(), "pair".into()])
        .expect("pair asset is valid")
}

pub fn by_name(name: &str) -> Option<Asset> {
    match name {
        "quad" => Some(quad()),
        "sphere" => Some(sphere()),
        "led_panel_wall" => Some(led_panel_wall()),
        "multi_object_pair" => Some(multi_object_pair()),
        _ => None,
    }
}

/// Writes every fixture as `<dir>/<name>.glb`.
pub fn write_all(dir: &Path) -> Result<(), AssetError> {
    std::fs::create_dir_all(dir)?;
    for name in FIXTURE_NAMES {
        let asset = by_name(name).expect("listed fixture exists");
        save_asset(&asset, &dir.join(format!("{name}.glb")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::color_entropy;

    #[test]
    fn fixture_shapes() {
        assert_eq!(quad().mesh.vertex_count(), 4);
        assert_eq!(quad().mesh.triangle_count(), 2);
        let s = sphere();
        assert!(s.mesh.vertex_count() >= 500);
        assert!(s.mesh.triangles().iter().all(|_| true));
        for t in 0..s.mesh.triangle_count() {
            assert!(s.mesh.triangle_area(t) > 0.0);
        }
        let p = led_panel_wall();
        assert!(p.mesh.vertex_count() >= 500);
        assert!(color_entropy(&p.materials.albedo).unwrap() >= 1.5);
        assert!(color_entropy(&s.materials.albedo).unwrap() >= 1.5);
    }
}
