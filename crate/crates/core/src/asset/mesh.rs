use super::AssetError;

/// Axis-aligned bounds in scene units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn diagonal(&self) -> f64 {
        (0..3).map(|i| (self.max[i] - self.min[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// True when `p` lies inside the box grown by `tol`.
    pub fn contains(&self, p: [f64; 3], tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }
}

/// Indexed triangle mesh with per-vertex normals and (optionally) UVs.
///
/// Positions are stored as `f32` so that glTF round trips are bit-exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    positions: Vec<[f32; 3]>,
    normals: Vec<[f32; 3]>,
    uvs: Vec<[f32; 2]>,
    triangles: Vec<[u32; 3]>,
}

const NORMAL_TOLERANCE: f32 = 1e-4;

impl Mesh {
    /// Validates and builds a mesh. `uvs` may be empty (an unwrapped mesh is
    /// only required by baking).
    pub fn new(
        positions: Vec<[f32; 3]>,
        normals: Vec<[f32; 3]>,
        uvs: Vec<[f32; 2]>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, AssetError> {
        let n = positions.len();
        if normals.len() != n {
            return Err(AssetError::InvalidAsset(format!(
                "{} normals for {n} vertices",
                normals.len()
            )));
        }
        if !uvs.is_empty() && uvs.len() != n {
            return Err(AssetError::InvalidAsset(format!("{} uvs for {n} vertices", uvs.len())));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(AssetError::InvalidAsset(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if positions.iter().flatten().chain(uvs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(AssetError::InvalidAsset("non-finite vertex attribute".into()));
        }
        for (i, nrm) in normals.iter().enumerate() {
            let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
            if !((len - 1.0).abs() <= NORMAL_TOLERANCE) {
                return Err(AssetError::InvalidAsset(format!("normal {i} has length {len}")));
            }
        }
        Ok(Self { positions, normals, uvs, triangles })
    }

    /// Builds a mesh with area-weighted smooth normals.
    pub fn with_computed_normals(
        positions: Vec<[f32; 3]>,
        uvs: Vec<[f32; 2]>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, AssetError> {
        let normals = smooth_normals(&positions, &triangles);
        Self::new(positions, normals, uvs, triangles)
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn normals(&self) -> &[[f32; 3]] {
        &self.normals
    }

    pub fn uvs(&self) -> &[[f32; 2]] {
        &self.uvs
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn has_uvs(&self) -> bool {
        !self.uvs.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for i in 0..3 {
                min[i] = min[i].min(p[i] as f64);
                max[i] = max[i].max(p[i] as f64);
            }
        }
        Aabb { min, max }
    }

    /// Center of the bounding box and the radius of the sphere around it
    /// enclosing every vertex.
    pub fn bounding_sphere(&self) -> ([f64; 3], f64) {
        let c = self.bounds().center();
        let r = self
            .positions
            .iter()
            .map(|p| (0..3).map(|i| (p[i] as f64 - c[i]).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        (c, r)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.positions[i as usize].map(|v| v as f64));
        let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cx = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        0.5 * (cx[0] * cx[0] + cx[1] * cx[1] + cx[2] * cx[2]).sqrt()
    }

    /// True when two meshes share vertex count, triangle indices and positions.
    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.triangles == other.triangles && self.positions == other.positions
    }
}

/// Area-weighted vertex normals; isolated or degenerate vertices get +Z.
/// Triangles with out-of-range indices are ignored.
pub fn smooth_normals(positions: &[[f32; 3]], triangles: &[[u32; 3]]) -> Vec<[f32; 3]> {
    let mut acc = vec![[0.0f64; 3]; positions.len()];
    for t in triangles {
        if t.iter().any(|&i| i as usize >= positions.len()) {
            continue;
        }
        let [a, b, c] = t.map(|i| positions[i as usize].map(|v| v as f64));
        let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ];
        for &i in t {
            for k in 0..3 {
                acc[i as usize][k] += n[k];
            }
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if len > 0.0 {
                [(n[0] / len) as f32, (n[1] / len) as f32, (n[2] / len) as f32]
            } else {
                [0.0, 0.0, 1.0]
            }
        })
        .collect()
}
