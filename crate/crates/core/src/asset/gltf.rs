//! Reader and writer for the glTF 2.0 subset used by the pipeline.
//!
//! Supported: one scene, exactly one mesh node with one indexed triangle
//! primitive, the metallic-roughness material model, PNG textures, and the
//! `KHR_materials_emissive_strength` extension. Anything else is rejected with
//! [`AssetError::UnsupportedFeature`] naming the offending feature.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use base64::Engine as _;
use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};
use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::color::{linear_to_srgb, srgb_to_linear};
use super::mesh::smooth_normals;
use super::{sanitize_id, Asset, AssetError, MaterialSet, Mesh, TextureMap};

const GLB_MAGIC: u32 = 0x4654_6C67;
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;
const EMISSIVE_STRENGTH_EXT: &str = "KHR_materials_emissive_strength";
const EXTRAS_KEY: &str = "emberforge";

const FLOAT: u32 = 5126;
const UNSIGNED_BYTE: u32 = 5121;
const UNSIGNED_SHORT: u32 = 5123;
const UNSIGNED_INT: u32 = 5125;
const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Root {
    asset: AssetInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    scenes: Vec<Scene>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    nodes: Vec<Node>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    meshes: Vec<MeshDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    materials: Vec<Material>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    textures: Vec<Texture>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    images: Vec<ImageDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    accessors: Vec<Accessor>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    buffer_views: Vec<BufferView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    buffers: Vec<Buffer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extensions_used: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extensions_required: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    animations: Vec<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    skins: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extras: Option<Value>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AssetInfo {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Scene {
    #[serde(default)]
    nodes: Vec<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Node {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<[f64; 16]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skin: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MeshDef {
    primitives: Vec<Primitive>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Primitive {
    attributes: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    material: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    targets: Option<Vec<Value>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Material {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pbr_metallic_roughness: Option<Pbr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal_texture: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    occlusion_texture: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emissive_texture: Option<TextureInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emissive_factor: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extensions: Option<MaterialExtensions>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Pbr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_color_factor: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_color_texture: Option<TextureInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metallic_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roughness_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metallic_roughness_texture: Option<TextureInfo>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TextureInfo {
    index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tex_coord: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MaterialExtensions {
    #[serde(rename = "KHR_materials_emissive_strength", default, skip_serializing_if = "Option::is_none")]
    emissive_strength: Option<EmissiveStrength>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct EmissiveStrength {
    #[serde(default = "one")]
    emissive_strength: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Texture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ImageDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mime_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    buffer_view: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Accessor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    buffer_view: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_offset: Option<usize>,
    component_type: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalized: Option<bool>,
    count: usize,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sparse: Option<Value>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BufferView {
    buffer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_offset: Option<usize>,
    byte_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    byte_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Buffer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uri: Option<String>,
    byte_length: usize,
}

fn unsupported(what: impl Into<String>) -> AssetError {
    AssetError::UnsupportedFeature(what.into())
}

fn malformed(what: impl Into<String>) -> AssetError {
    AssetError::MalformedFile(what.into())
}

/// Loads a `.glb` or `.gltf` file.
pub fn load_asset(path: &Path) -> Result<Asset, AssetError> {
    let bytes = std::fs::read(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("asset");
    load_with_base(&bytes, path.parent(), stem)
}

/// Loads an asset from in-memory GLB or glTF JSON bytes. External URIs are
/// not resolvable from memory and yield [`AssetError::MissingBuffer`].
pub fn load_asset_from_bytes(bytes: &[u8], fallback_id: &str) -> Result<Asset, AssetError> {
    load_with_base(bytes, None, fallback_id)
}

fn load_with_base(bytes: &[u8], base: Option<&Path>, fallback_id: &str) -> Result<Asset, AssetError> {
    let (json, bin) = if bytes.len() >= 4 && u32::from_le_bytes(bytes[..4].try_into().unwrap()) == GLB_MAGIC {
        split_glb(bytes)?
    } else {
        (bytes, None)
    };
    let root: Root = serde_json::from_slice(json).map_err(|e| malformed(format!("glTF JSON: {e}")))?;
    Document::new(root, bin, base)?.into_asset(fallback_id)
}

fn split_glb(bytes: &[u8]) -> Result<(&[u8], Option<&[u8]>), AssetError> {
    if bytes.len() < 20 {
        return Err(malformed("GLB shorter than header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != 2 {
        return Err(unsupported(format!("GLB container version {}", word(4))));
    }
    let total = word(8) as usize;
    if total != bytes.len() {
        return Err(malformed(format!("GLB header length {total} but file has {} bytes", bytes.len())));
    }
    let mut offset = 12;
    let mut json = None;
    let mut bin = None;
    while offset < total {
        if offset + 8 > total {
            return Err(malformed("truncated GLB chunk header"));
        }
        let len = word(offset) as usize;
        let kind = word(offset + 4);
        let start = offset + 8;
        let end = start.checked_add(len).filter(|&e| e <= total).ok_or_else(|| malformed("GLB chunk overruns file"))?;
        if len % 4 != 0 {
            return Err(malformed("GLB chunk length not 4-byte aligned"));
        }
        match kind {
            CHUNK_JSON if json.is_none() && offset == 12 => json = Some(&bytes[start..end]),
            CHUNK_BIN if bin.is_none() && json.is_some() => bin = Some(&bytes[start..end]),
            CHUNK_JSON | CHUNK_BIN => return Err(malformed("GLB chunks out of order or repeated")),
            _ => {} // unknown chunk types are skipped per the container spec
        }
        offset = end;
    }
    let json = json.ok_or_else(|| malformed("GLB has no JSON chunk"))?;
    Ok((json, bin))
}

struct Document<'a> {
    root: Root,
    buffers: Vec<Vec<u8>>,
    base: Option<&'a Path>,
}

impl<'a> Document<'a> {
    fn new(root: Root, bin: Option<&[u8]>, base: Option<&'a Path>) -> Result<Self, AssetError> {
        if !root.asset.version.starts_with("2.") {
            return Err(unsupported(format!("glTF version {}", root.asset.version)));
        }
        for ext in root.extensions_used.iter().chain(&root.extensions_required) {
            if ext != EMISSIVE_STRENGTH_EXT {
                return Err(unsupported(format!("extension {ext}")));
            }
        }
        if !root.animations.is_empty() {
            return Err(unsupported("animations"));
        }
        if !root.skins.is_empty() {
            return Err(unsupported("skins"));
        }
        if root.scenes.len() > 1 {
            return Err(unsupported("multiple scenes"));
        }
        let mut buffers = Vec::with_capacity(root.buffers.len());
        for (i, b) in root.buffers.iter().enumerate() {
            let data = match &b.uri {
                None if i == 0 => bin.map(<[u8]>::to_vec).ok_or_else(|| {
                    AssetError::MissingBuffer("buffer 0 has no uri and the file has no BIN chunk".into())
                })?,
                None => return Err(AssetError::MissingBuffer(format!("buffer {i} has no uri"))),
                Some(uri) => resolve_uri(uri, base).map_err(|e| match e {
                    AssetError::Io(_) => AssetError::MissingBuffer(format!("buffer {i}: {uri}")),
                    other => other,
                })?,
            };
            if data.len() < b.byte_length {
                return Err(AssetError::MissingBuffer(format!(
                    "buffer {i} holds {} bytes, declared {}",
                    data.len(),
                    b.byte_length
                )));
            }
            buffers.push(data);
        }
        Ok(Self { root, buffers, base })
    }

    fn view_bytes(&self, index: usize) -> Result<(&[u8], Option<usize>), AssetError> {
        let view = self.root.buffer_views.get(index).ok_or_else(|| malformed(format!("bufferView {index}")))?;
        let buf = self.buffers.get(view.buffer).ok_or_else(|| malformed(format!("buffer {}", view.buffer)))?;
        let start = view.byte_offset.unwrap_or(0);
        let end = start
            .checked_add(view.byte_length)
            .filter(|&e| e <= buf.len())
            .ok_or_else(|| malformed(format!("bufferView {index} overruns its buffer")))?;
        Ok((&buf[start..end], view.byte_stride))
    }

    /// Reads an accessor as flat `f64` components, checking type and bounds.
    fn read_accessor(&self, index: usize, kind: &str, allow: &[u32]) -> Result<Vec<f64>, AssetError> {
        let acc = self.root.accessors.get(index).ok_or_else(|| malformed(format!("accessor {index}")))?;
        if acc.sparse.is_some() {
            return Err(unsupported("sparse accessors"));
        }
        if acc.kind != kind {
            return Err(malformed(format!("accessor {index} has type {}, expected {kind}", acc.kind)));
        }
        if !allow.contains(&acc.component_type) {
            return Err(unsupported(format!(
                "accessor {index} component type {} for {kind}",
                acc.component_type
            )));
        }
        if acc.normalized == Some(true) {
            return Err(unsupported(format!("normalized integer accessor {index}")));
        }
        let comps = match kind {
            "SCALAR" => 1,
            "VEC2" => 2,
            "VEC3" => 3,
            _ => return Err(unsupported(format!("accessor type {kind}"))),
        };
        let comp_size = match acc.component_type {
            UNSIGNED_BYTE => 1,
            UNSIGNED_SHORT => 2,
            FLOAT | UNSIGNED_INT => 4,
            other => return Err(unsupported(format!("component type {other}"))),
        };
        let Some(view_index) = acc.buffer_view else {
            return Ok(vec![0.0; acc.count * comps]);
        };
        let (bytes, stride) = self.view_bytes(view_index)?;
        let elem = comps * comp_size;
        let stride = stride.unwrap_or(elem);
        if stride < elem {
            return Err(malformed(format!("accessor {index} stride {stride} smaller than element {elem}")));
        }
        let offset = acc.byte_offset.unwrap_or(0);
        if acc.count > 0 {
            let last = offset + stride * (acc.count - 1) + elem;
            if last > bytes.len() {
                return Err(malformed(format!("accessor {index} overruns bufferView {view_index}")));
            }
        }
        let mut out = Vec::with_capacity(acc.count * comps);
        for i in 0..acc.count {
            let base = offset + i * stride;
            for c in 0..comps {
                let p = base + c * comp_size;
                let v = match acc.component_type {
                    FLOAT => f32::from_le_bytes(bytes[p..p + 4].try_into().unwrap()) as f64,
                    UNSIGNED_INT => u32::from_le_bytes(bytes[p..p + 4].try_into().unwrap()) as f64,
                    UNSIGNED_SHORT => u16::from_le_bytes(bytes[p..p + 2].try_into().unwrap()) as f64,
                    _ => bytes[p] as f64,
                };
                out.push(v);
            }
        }
        Ok(out)
    }

    fn image(&self, texture: &TextureInfo) -> Result<image::Rgba32FImage, AssetError> {
        if texture.tex_coord.unwrap_or(0) != 0 {
            return Err(unsupported("texture coordinate sets other than TEXCOORD_0"));
        }
        let tex = self.root.textures.get(texture.index).ok_or_else(|| malformed(format!("texture {}", texture.index)))?;
        let src = tex.source.ok_or_else(|| unsupported("texture without a source image"))?;
        let img = self.root.images.get(src).ok_or_else(|| malformed(format!("image {src}")))?;
        let bytes = match (&img.buffer_view, &img.uri) {
            (Some(view), _) => self.view_bytes(*view)?.0.to_vec(),
            (None, Some(uri)) => resolve_uri(uri, self.base)?,
            (None, None) => return Err(malformed(format!("image {src} has neither uri nor bufferView"))),
        };
        let mime = img.mime_type.as_deref().unwrap_or("");
        let is_png = bytes.starts_with(b"\x89PNG\r\n\x1a\n");
        if !is_png {
            let what = if mime.is_empty() { "non-PNG image".to_string() } else { format!("image type {mime}") };
            return Err(unsupported(what));
        }
        let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| AssetError::Image(format!("image {src}: {e}")))?;
        Ok(decoded.into_rgba32f())
    }

    fn into_asset(self, fallback_id: &str) -> Result<Asset, AssetError> {
        let (node_mesh, world) = self.mesh_node()?;
        let mesh_def = self.root.meshes.get(node_mesh).ok_or_else(|| malformed(format!("mesh {node_mesh}")))?;
        if mesh_def.primitives.len() != 1 {
            return Err(unsupported(format!("{} primitives in mesh (exactly one supported)", mesh_def.primitives.len())));
        }
        let prim = &mesh_def.primitives[0];
        if prim.mode.unwrap_or(4) != 4 {
            return Err(unsupported(format!("primitive mode {}", prim.mode.unwrap_or(4))));
        }
        if prim.targets.as_ref().is_some_and(|t| !t.is_empty()) {
            return Err(unsupported("morph targets"));
        }
        for name in prim.attributes.keys() {
            if name == "COLOR_0" || name.starts_with("JOINTS_") || name.starts_with("WEIGHTS_") {
                return Err(unsupported(format!("vertex attribute {name}")));
            }
        }
        let pos_idx = *prim.attributes.get("POSITION").ok_or_else(|| malformed("primitive without POSITION"))?;
        let indices_idx = prim.indices.ok_or_else(|| unsupported("non-indexed primitive"))?;

        let raw_pos = self.read_accessor(pos_idx, "VEC3", &[FLOAT])?;
        let mut positions: Vec<[f32; 3]> =
            raw_pos.chunks_exact(3).map(|c| [c[0] as f32, c[1] as f32, c[2] as f32]).collect();
        let n = positions.len();
        let raw_idx = self.read_accessor(indices_idx, "SCALAR", &[UNSIGNED_BYTE, UNSIGNED_SHORT, UNSIGNED_INT])?;
        if raw_idx.len() % 3 != 0 {
            return Err(malformed(format!("{} indices is not a multiple of 3", raw_idx.len())));
        }
        let triangles: Vec<[u32; 3]> =
            raw_idx.chunks_exact(3).map(|c| [c[0] as u32, c[1] as u32, c[2] as u32]).collect();
        if triangles.iter().flatten().any(|&i| i as usize >= n) {
            return Err(malformed("index out of range"));
        }
        let uvs: Vec<[f32; 2]> = match prim.attributes.get("TEXCOORD_0") {
            Some(&i) => {
                let raw = self.read_accessor(i, "VEC2", &[FLOAT])?;
                if raw.len() != n * 2 {
                    return Err(malformed("TEXCOORD_0 count differs from POSITION count"));
                }
                raw.chunks_exact(2).map(|c| [c[0] as f32, c[1] as f32]).collect()
            }
            None => Vec::new(),
        };
        let mut normals: Vec<[f32; 3]> = match prim.attributes.get("NORMAL") {
            Some(&i) => {
                let raw = self.read_accessor(i, "VEC3", &[FLOAT])?;
                if raw.len() != n * 3 {
                    return Err(malformed("NORMAL count differs from POSITION count"));
                }
                raw.chunks_exact(3).map(|c| [c[0] as f32, c[1] as f32, c[2] as f32]).collect()
            }
            None => Vec::new(),
        };

        if let Some(m) = world.filter(|m| *m != Matrix4::identity()) {
            let normal_m: Matrix3<f64> = m
                .fixed_view::<3, 3>(0, 0)
                .into_owned()
                .try_inverse()
                .ok_or_else(|| malformed("singular node transform"))?
                .transpose();
            for p in positions.iter_mut() {
                let v = m * Vector4::new(p[0] as f64, p[1] as f64, p[2] as f64, 1.0);
                *p = [v.x as f32, v.y as f32, v.z as f32];
            }
            for nrm in normals.iter_mut() {
                let v = (normal_m * Vector3::new(nrm[0] as f64, nrm[1] as f64, nrm[2] as f64)).normalize();
                *nrm = [v.x as f32, v.y as f32, v.z as f32];
            }
        }
        let normals = repair_normals(normals, &positions, &triangles);
        let mesh = Mesh::new(positions, normals, uvs, triangles)?;

        let materials = match prim.material {
            Some(i) => {
                let mat = self.root.materials.get(i).ok_or_else(|| malformed(format!("material {i}")))?;
                self.material(mat)?
            }
            None => MaterialSet::constant([1.0; 3], 1.0, 1.0),
        };

        let extras = self.root.extras.as_ref().and_then(|e| e.get(EXTRAS_KEY));
        let id = extras
            .and_then(|e| e.get("id"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .filter(|s| super::is_filesystem_safe(s))
            .unwrap_or_else(|| sanitize_id(fallback_id));
        let metadata = extras
            .and_then(|e| e.get("tags"))
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        Asset::new(id, mesh, materials, metadata)
    }

    /// Finds the single node carrying a mesh and its world transform (`None`
    /// when every transform on the path is absent).
    fn mesh_node(&self) -> Result<(usize, Option<Matrix4<f64>>), AssetError> {
        let nodes = &self.root.nodes;
        let roots: Vec<usize> = match self.root.scenes.first() {
            Some(scene) => scene.nodes.clone(),
            None => {
                let mut is_child = vec![false; nodes.len()];
                for n in nodes {
                    for &c in &n.children {
                        if let Some(f) = is_child.get_mut(c) {
                            *f = true;
                        }
                    }
                }
                (0..nodes.len()).filter(|&i| !is_child[i]).collect()
            }
        };
        let mut found = Vec::new();
        let mut stack: Vec<(usize, Option<Matrix4<f64>>, usize)> = roots.into_iter().map(|r| (r, None, 0)).collect();
        while let Some((i, parent, depth)) = stack.pop() {
            if depth > nodes.len() {
                return Err(malformed("node hierarchy contains a cycle"));
            }
            let node = nodes.get(i).ok_or_else(|| malformed(format!("node {i}")))?;
            if node.skin.is_some() {
                return Err(unsupported("skinned nodes"));
            }
            let local = local_transform(node);
            let world = match (parent, local) {
                (Some(p), Some(l)) => Some(p * l),
                (p, l) => p.or(l),
            };
            if let Some(m) = node.mesh {
                found.push((m, world));
            }
            for &c in node.children.iter().rev() {
                stack.push((c, world, depth + 1));
            }
        }
        match found.len() {
            0 => Err(malformed("scene contains no mesh node")),
            1 => Ok(found[0]),
            k => Err(unsupported(format!("{k} mesh nodes (exactly one supported)"))),
        }
    }

    fn material(&self, mat: &Material) -> Result<MaterialSet, AssetError> {
        if mat.normal_texture.is_some() {
            return Err(unsupported("normalTexture"));
        }
        if mat.occlusion_texture.is_some() {
            return Err(unsupported("occlusionTexture"));
        }
        if let Some(mode) = mat.alpha_mode.as_deref().filter(|m| *m != "OPAQUE") {
            return Err(unsupported(format!("alphaMode {mode}")));
        }
        let default_pbr = Pbr::default();
        let pbr = mat.pbr_metallic_roughness.as_ref().unwrap_or(&default_pbr);
        let bcf = pbr.base_color_factor.unwrap_or([1.0; 4]);
        let base = [bcf[0], bcf[1], bcf[2]];
        let albedo = match &pbr.base_color_texture {
            Some(t) => rgb_map(&self.image(t)?, base, true),
            None => TextureMap::constant(&base.map(|v| v.clamp(0.0, 1.0) as f32)),
        };
        let mf = pbr.metallic_factor.unwrap_or(1.0);
        let rf = pbr.roughness_factor.unwrap_or(1.0);
        let (metallic, roughness) = match &pbr.metallic_roughness_texture {
            Some(t) => {
                let img = self.image(t)?;
                (channel_map(&img, 2, mf), channel_map(&img, 1, rf))
            }
            None => (
                TextureMap::constant(&[mf.clamp(0.0, 1.0) as f32]),
                TextureMap::constant(&[rf.clamp(0.0, 1.0) as f32]),
            ),
        };
        let ef = mat.emissive_factor.unwrap_or([0.0; 3]);
        let emission = match &mat.emissive_texture {
            Some(t) => rgb_map(&self.image(t)?, ef, true),
            None => TextureMap::constant(&ef.map(|v| v.clamp(0.0, 1.0) as f32)),
        };
        let ext_strength = mat
            .extensions
            .as_ref()
            .and_then(|e| e.emissive_strength.as_ref())
            .map(|e| e.emissive_strength);
        let emission_strength = match ext_strength {
            Some(s) => s,
            None if mat.emissive_texture.is_some() || ef.iter().any(|&v| v > 0.0) => 1.0,
            None => 0.0,
        };
        let set = MaterialSet { albedo, metallic, roughness, emission, emission_strength };
        set.validate()?;
        Ok(set)
    }
}

fn local_transform(node: &Node) -> Option<Matrix4<f64>> {
    if let Some(m) = node.matrix {
        return Some(Matrix4::from_column_slice(&m));
    }
    if node.translation.is_none() && node.rotation.is_none() && node.scale.is_none() {
        return None;
    }
    let t = node.translation.unwrap_or([0.0; 3]);
    let r = node.rotation.unwrap_or([0.0, 0.0, 0.0, 1.0]);
    let s = node.scale.unwrap_or([1.0; 3]);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(r[3], r[0], r[1], r[2]));
    Some(
        Matrix4::new_translation(&Vector3::new(t[0], t[1], t[2]))
            * q.to_homogeneous()
            * Matrix4::new_nonuniform_scaling(&Vector3::new(s[0], s[1], s[2])),
    )
}

/// Keeps file normals that are unit within tolerance, renormalizes the rest,
/// and falls back to smooth normals for missing or zero-length entries.
fn repair_normals(normals: Vec<[f32; 3]>, positions: &[[f32; 3]], triangles: &[[u32; 3]]) -> Vec<[f32; 3]> {
    if normals.is_empty() {
        return smooth_normals(positions, triangles);
    }
    let mut smooth: Option<Vec<[f32; 3]>> = None;
    normals
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = ((n[0] as f64).powi(2) + (n[1] as f64).powi(2) + (n[2] as f64).powi(2)).sqrt();
            if (len - 1.0).abs() <= 1e-5 {
                n
            } else if len > 1e-12 {
                [(n[0] as f64 / len) as f32, (n[1] as f64 / len) as f32, (n[2] as f64 / len) as f32]
            } else {
                smooth.get_or_insert_with(|| smooth_normals(positions, triangles))[i]
            }
        })
        .collect()
}

fn rgb_map(img: &image::Rgba32FImage, factor: [f64; 3], srgb: bool) -> TextureMap {
    let (w, h) = img.dimensions();
    TextureMap::from_fn(w, h, 3, |x, y| {
        let p = img.get_pixel(x, y).0;
        let mut out = [0.0f32; 3];
        for k in 0..3 {
            let v = if srgb { srgb_to_linear(p[k]) } else { p[k] };
            out[k] = (v as f64 * factor[k]).clamp(0.0, 1.0) as f32;
        }
        out
    })
}

fn channel_map(img: &image::Rgba32FImage, channel: usize, factor: f64) -> TextureMap {
    let (w, h) = img.dimensions();
    TextureMap::from_fn(w, h, 1, |x, y| {
        let v = (img.get_pixel(x, y).0[channel] as f64 * factor).clamp(0.0, 1.0) as f32;
        [v, v, v]
    })
}

fn resolve_uri(uri: &str, base: Option<&Path>) -> Result<Vec<u8>, AssetError> {
    if let Some(rest) = uri.strip_prefix("data:") {
        let (_, payload) = rest.split_once(";base64,").ok_or_else(|| unsupported("non-base64 data URI"))?;
        return base64::engine::general_purpose::STANDARD
            .decode(payload)
            .map_err(|e| malformed(format!("data URI: {e}")));
    }
    if uri.contains("://") {
        return Err(unsupported(format!("remote URI {uri}")));
    }
    let base = base.ok_or_else(|| AssetError::MissingBuffer(format!("external URI {uri} without a base directory")))?;
    Ok(std::fs::read(base.join(uri))?)
}

// ---------------------------------------------------------------------------
// Writing

struct BinBuilder {
    bin: Vec<u8>,
    views: Vec<BufferView>,
}

impl BinBuilder {
    fn push(&mut self, bytes: &[u8], target: Option<u32>) -> usize {
        while self.bin.len() % 4 != 0 {
            self.bin.push(0);
        }
        self.views.push(BufferView {
            buffer: 0,
            byte_offset: Some(self.bin.len()),
            byte_length: bytes.len(),
            byte_stride: None,
            target,
        });
        self.bin.extend_from_slice(bytes);
        self.views.len() - 1
    }
}

fn png16(map: &TextureMap, encode: impl Fn(&[f32]) -> [u16; 3]) -> Result<Vec<u8>, AssetError> {
    let data: Vec<u16> = map.texels().flat_map(encode).collect();
    let img: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width(), map.height(), data).expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageRgb16(img)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AssetError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn srgb_png(map: &TextureMap) -> Result<Vec<u8>, AssetError> {
    png16(map, |t| [0, 1, 2].map(|k| quantize16(linear_to_srgb(t[k]))))
}

/// Serializes an asset as GLB bytes.
///
/// Colour textures are written as 16-bit sRGB PNGs and metallic/roughness as a
/// packed 16-bit linear PNG (G = roughness, B = metallic); 1×1 maps become
/// material factors. The emission strength is always written through
/// `KHR_materials_emissive_strength`.
pub fn save_asset_to_bytes(asset: &Asset) -> Result<Vec<u8>, AssetError> {
    asset.validate()?;
    let mesh = &asset.mesh;
    if mesh.triangle_count() == 0 {
        return Err(AssetError::InvalidAsset("asset has no triangles".into()));
    }
    let mut b = BinBuilder { bin: Vec::new(), views: Vec::new() };
    let mut accessors = Vec::new();
    let mut attributes = BTreeMap::new();

    let bounds = mesh.bounds();
    let pos_bytes: Vec<u8> = mesh.positions().iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    let view = b.push(&pos_bytes, Some(ARRAY_BUFFER));
    accessors.push(Accessor {
        buffer_view: Some(view),
        component_type: FLOAT,
        count: mesh.vertex_count(),
        kind: "VEC3".into(),
        min: Some(bounds.min.to_vec()),
        max: Some(bounds.max.to_vec()),
        ..Default::default()
    });
    attributes.insert("POSITION".to_string(), accessors.len() - 1);

    let nrm_bytes: Vec<u8> = mesh.normals().iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    let view = b.push(&nrm_bytes, Some(ARRAY_BUFFER));
    accessors.push(Accessor {
        buffer_view: Some(view),
        component_type: FLOAT,
        count: mesh.vertex_count(),
        kind: "VEC3".into(),
        ..Default::default()
    });
    attributes.insert("NORMAL".to_string(), accessors.len() - 1);

    if mesh.has_uvs() {
        let uv_bytes: Vec<u8> = mesh.uvs().iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
        let view = b.push(&uv_bytes, Some(ARRAY_BUFFER));
        accessors.push(Accessor {
            buffer_view: Some(view),
            component_type: FLOAT,
            count: mesh.vertex_count(),
            kind: "VEC2".into(),
            ..Default::default()
        });
        attributes.insert("TEXCOORD_0".to_string(), accessors.len() - 1);
    }

    let idx_bytes: Vec<u8> = mesh.triangles().iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    let view = b.push(&idx_bytes, Some(ELEMENT_ARRAY_BUFFER));
    accessors.push(Accessor {
        buffer_view: Some(view),
        component_type: UNSIGNED_INT,
        count: mesh.triangle_count() * 3,
        kind: "SCALAR".into(),
        ..Default::default()
    });
    let indices = accessors.len() - 1;

    let mut images = Vec::new();
    let mut textures = Vec::new();
    let mut add_image = |b: &mut BinBuilder, png: Vec<u8>| -> usize {
        let view = b.push(&png, None);
        images.push(ImageDef { uri: None, mime_type: Some("image/png".into()), buffer_view: Some(view) });
        textures.push(Texture { source: Some(images.len() - 1) });
        textures.len() - 1
    };

    let m = &asset.materials;
    let mut pbr = Pbr::default();
    if m.albedo.is_constant() {
        let c = m.albedo.rgb(0, 0);
        pbr.base_color_factor = Some([c[0] as f64, c[1] as f64, c[2] as f64, 1.0]);
    } else {
        let index = add_image(&mut b, srgb_png(&m.albedo)?);
        pbr.base_color_texture = Some(TextureInfo { index, tex_coord: None });
    }
    if m.metallic.is_constant() && m.roughness.is_constant() {
        pbr.metallic_factor = Some(m.metallic.data()[0] as f64);
        pbr.roughness_factor = Some(m.roughness.data()[0] as f64);
    } else {
        let w = m.metallic.width().max(m.roughness.width());
        let h = m.metallic.height().max(m.roughness.height());
        let metal = m.metallic.resize_nearest(w, h);
        let rough = m.roughness.resize_nearest(w, h);
        let packed = TextureMap::from_fn(w, h, 3, |x, y| [0.0, rough.texel(x, y)[0], metal.texel(x, y)[0]]);
        let index = add_image(&mut b, png16(&packed, |t| [0, 1, 2].map(|k| quantize16(t[k])))?);
        pbr.metallic_roughness_texture = Some(TextureInfo { index, tex_coord: None });
        pbr.metallic_factor = Some(1.0);
        pbr.roughness_factor = Some(1.0);
    }
    let mut material = Material {
        pbr_metallic_roughness: Some(pbr),
        extensions: Some(MaterialExtensions {
            emissive_strength: Some(EmissiveStrength { emissive_strength: m.emission_strength }),
        }),
        ..Default::default()
    };
    if m.emission.is_constant() {
        let c = m.emission.rgb(0, 0);
        material.emissive_factor = Some([c[0] as f64, c[1] as f64, c[2] as f64]);
    } else {
        let index = add_image(&mut b, srgb_png(&m.emission)?);
        material.emissive_texture = Some(TextureInfo { index, tex_coord: None });
        material.emissive_factor = Some([1.0; 3]);
    }

    while b.bin.len() % 4 != 0 {
        b.bin.push(0);
    }
    let root = Root {
        asset: AssetInfo { version: "2.0".into(), generator: Some(concat!("emberforge ", env!("CARGO_PKG_VERSION")).into()) },
        scene: Some(0),
        scenes: vec![Scene { nodes: vec![0] }],
        nodes: vec![Node { mesh: Some(0), ..Default::default() }],
        meshes: vec![MeshDef {
            primitives: vec![Primitive { attributes, indices: Some(indices), material: Some(0), mode: Some(4), targets: None }],
        }],
        materials: vec![material],
        textures,
        images,
        accessors,
        buffer_views: b.views,
        buffers: vec![Buffer { uri: None, byte_length: b.bin.len() }],
        extensions_used: vec![EMISSIVE_STRENGTH_EXT.into()],
        extras: Some(serde_json::json!({ EXTRAS_KEY: { "id": asset.id, "tags": asset.metadata } })),
        ..Default::default()
    };
    let mut json = serde_json::to_vec(&root).map_err(|e| malformed(e.to_string()))?;
    while json.len() % 4 != 0 {
        json.push(b' ');
    }
    let total = 12 + 8 + json.len() + 8 + b.bin.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(b.bin.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
    out.extend_from_slice(&b.bin);
    Ok(out)
}

/// Writes an asset as a GLB file.
pub fn save_asset(asset: &Asset, path: &Path) -> Result<(), AssetError> {
    let bytes = save_asset_to_bytes(asset)?;
    Ok(std::fs::write(path, bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_asset(strength: f64) -> Asset {
        let mesh = Mesh::with_computed_normals(
            vec![[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]],
            vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let mut mats = MaterialSet::constant([0.8, 0.2, 0.1], 0.0, 0.5);
        mats.emission = TextureMap::from_fn(4, 4, 3, |x, _| if x < 2 { [1.0, 0.5, 0.0] } else { [0.0; 3] });
        mats.emission_strength = strength;
        Asset::new("quad", mesh, mats, vec!["single".into()]).unwrap()
    }

    fn json_of(glb: &[u8]) -> Value {
        let (json, _) = split_glb(glb).unwrap();
        serde_json::from_slice(json).unwrap()
    }

    #[test]
    fn strength_written_to_extension() {
        let glb = save_asset_to_bytes(&quad_asset(1.75)).unwrap();
        let v = json_of(&glb);
        assert_eq!(v["materials"][0]["extensions"][EMISSIVE_STRENGTH_EXT]["emissiveStrength"], 1.75);
        assert_eq!(v["extensionsUsed"][0], EMISSIVE_STRENGTH_EXT);
    }

    #[test]
    fn chunks_are_aligned() {
        let glb = save_asset_to_bytes(&quad_asset(1.0)).unwrap();
        assert_eq!(glb.len() % 4, 0);
        let json_len = u32::from_le_bytes(glb[12..16].try_into().unwrap()) as usize;
        assert_eq!(json_len % 4, 0);
    }

    #[test]
    fn zero_triangles_is_invalid() {
        let mesh = Mesh::new(vec![[0.0; 3]], vec![[0.0, 0.0, 1.0]], vec![], vec![]).unwrap();
        let asset = Asset::new("empty", mesh, MaterialSet::constant([0.5; 3], 0.0, 0.5), vec![]).unwrap();
        assert!(matches!(save_asset_to_bytes(&asset), Err(AssetError::InvalidAsset(_))));
    }

    #[test]
    fn rejects_unknown_extension() {
        let mut v = json_of(&save_asset_to_bytes(&quad_asset(1.0)).unwrap());
        v["extensionsUsed"] = serde_json::json!(["KHR_texture_transform"]);
        let text = serde_json::to_vec(&v).unwrap();
        let err = load_asset_from_bytes(&text, "x").unwrap_err();
        assert!(matches!(err, AssetError::UnsupportedFeature(ref s) if s.contains("KHR_texture_transform")));
    }

    #[test]
    fn json_gltf_without_bin_is_missing_buffer() {
        let v = json_of(&save_asset_to_bytes(&quad_asset(1.0)).unwrap());
        let text = serde_json::to_vec(&v).unwrap();
        assert!(matches!(load_asset_from_bytes(&text, "x"), Err(AssetError::MissingBuffer(_))));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(load_asset_from_bytes(b"not a gltf", "x"), Err(AssetError::MalformedFile(_))));
        let mut glb = save_asset_to_bytes(&quad_asset(1.0)).unwrap();
        glb.truncate(glb.len() - 4);
        assert!(matches!(load_asset_from_bytes(&glb, "x"), Err(AssetError::MalformedFile(_))));
    }

    #[test]
    fn node_translation_is_applied() {
        let glb = save_asset_to_bytes(&quad_asset(1.0)).unwrap();
        let (json, bin) = split_glb(&glb).unwrap();
        let mut v: Value = serde_json::from_slice(json).unwrap();
        v["nodes"][0]["translation"] = serde_json::json!([0.0, 0.0, 2.0]);
        let root: Root = serde_json::from_value(v).unwrap();
        let asset = Document::new(root, bin, None).unwrap().into_asset("q").unwrap();
        assert!(asset.mesh.positions().iter().all(|p| p[2] == 2.0));
    }
}
