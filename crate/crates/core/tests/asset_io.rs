use emberforge::asset::{
    color_entropy, decode_emtx, encode_emtx, load_asset, load_asset_from_bytes, save_asset, save_asset_to_bytes, Asset,
    AssetError, MaterialSet, Mesh, TextureMap,
};
use emberforge::fixtures;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a GLB container by hand from a JSON string and a binary blob.
fn glb(json: &str, bin: &[u8]) -> Vec<u8> {
    let mut j = json.as_bytes().to_vec();
    while j.len() % 4 != 0 {
        j.push(b' ');
    }
    let mut b = bin.to_vec();
    while b.len() % 4 != 0 {
        b.push(0);
    }
    let total = 12 + 8 + j.len() + 8 + b.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(b"glTF");
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(j.len() as u32).to_le_bytes());
    out.extend_from_slice(b"JSON");
    out.extend_from_slice(&j);
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b"BIN\0");
    out.extend_from_slice(&b);
    out
}

fn f32s(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Unit quad in the z = 0 plane: positions (48 B), normals (48 B), UVs
/// (32 B), then six u16 indices (12 B).
fn quad_bin() -> Vec<u8> {
    let mut bin = f32s(&[0., 0., 0., 1., 0., 0., 1., 1., 0., 0., 1., 0.]);
    bin.extend(f32s(&[0., 0., 1., 0., 0., 1., 0., 0., 1., 0., 0., 1.]));
    bin.extend(f32s(&[0., 1., 1., 1., 1., 0., 0., 0.]));
    for i in [0u16, 1, 2, 0, 2, 3] {
        bin.extend_from_slice(&i.to_le_bytes());
    }
    bin
}

fn quad_json(material: &str, extensions_used: &str) -> String {
    format!(
        r#"{{
  "asset": {{"version": "2.0", "generator": "hand"}},
  {extensions_used}
  "scene": 0,
  "scenes": [{{"nodes": [0]}}],
  "nodes": [{{"mesh": 0}}],
  "meshes": [{{"primitives": [{{"attributes": {{"POSITION": 0, "NORMAL": 1, "TEXCOORD_0": 2}}, "indices": 3, "material": 0}}]}}],
  "materials": [{material}],
  "buffers": [{{"byteLength": 140}}],
  "bufferViews": [
    {{"buffer": 0, "byteOffset": 0, "byteLength": 48}},
    {{"buffer": 0, "byteOffset": 48, "byteLength": 48}},
    {{"buffer": 0, "byteOffset": 96, "byteLength": 32}},
    {{"buffer": 0, "byteOffset": 128, "byteLength": 12}}
  ],
  "accessors": [
    {{"bufferView": 0, "componentType": 5126, "count": 4, "type": "VEC3", "min": [0,0,0], "max": [1,1,0]}},
    {{"bufferView": 1, "componentType": 5126, "count": 4, "type": "VEC3"}},
    {{"bufferView": 2, "componentType": 5126, "count": 4, "type": "VEC2"}},
    {{"bufferView": 3, "componentType": 5123, "count": 6, "type": "SCALAR"}}
  ]
}}"#
    )
}

#[test]
fn hand_built_quad_glb() {
    let material = r#"{"pbrMetallicRoughness": {"baseColorFactor": [0.5, 0.5, 0.5, 1.0]},
        "emissiveFactor": [1, 1, 1],
        "extensions": {"KHR_materials_emissive_strength": {"emissiveStrength": 2.5}}}"#;
    let bytes = glb(&quad_json(material, r#""extensionsUsed": ["KHR_materials_emissive_strength"],"#), &quad_bin());
    let a = load_asset_from_bytes(&bytes, "hand_quad").unwrap();
    assert_eq!(a.mesh.vertex_count(), 4);
    assert_eq!(a.mesh.triangle_count(), 2);
    let (mut lo, mut hi) = ([f32::MAX; 2], [f32::MIN; 2]);
    for uv in a.mesh.uvs() {
        for k in 0..2 {
            lo[k] = lo[k].min(uv[k]);
            hi[k] = hi[k].max(uv[k]);
        }
    }
    assert_eq!((lo, hi), ([0.0; 2], [1.0; 2]));
    assert_eq!(a.materials.emission_strength, 2.5);
    assert_eq!(a.mesh.positions()[2], [1.0, 1.0, 0.0]);
}

#[test]
fn no_emission_means_zero_strength() {
    let material = r#"{"pbrMetallicRoughness": {"baseColorFactor": [0.5, 0.5, 0.5, 1.0]}}"#;
    let a = load_asset_from_bytes(&glb(&quad_json(material, ""), &quad_bin()), "plain").unwrap();
    assert_eq!(a.materials.emission_strength, 0.0);
    assert!(!a.materials.has_emission());
}

#[test]
fn unsupported_and_malformed_inputs() {
    let m = r#"{"pbrMetallicRoughness": {}}"#;
    let bytes = glb(&quad_json(m, r#""extensionsUsed": ["KHR_draco_mesh_compression"],"#), &quad_bin());
    assert!(matches!(load_asset_from_bytes(&bytes, "x"), Err(AssetError::UnsupportedFeature(_))));
    let mut bad = glb(&quad_json(m, ""), &quad_bin());
    bad[8] ^= 0x40;
    assert!(matches!(load_asset_from_bytes(&bad, "x"), Err(AssetError::MalformedFile(_))));
}

fn assert_round_trip(a: &Asset, b: &Asset) {
    let bits3 = |v: &[[f32; 3]]| v.iter().flat_map(|p| p.map(f32::to_bits)).collect::<Vec<_>>();
    assert_eq!(bits3(a.mesh.positions()), bits3(b.mesh.positions()));
    assert_eq!(bits3(a.mesh.normals()), bits3(b.mesh.normals()));
    let bits2 = |v: &[[f32; 2]]| v.iter().flat_map(|p| p.map(f32::to_bits)).collect::<Vec<_>>();
    assert_eq!(bits2(a.mesh.uvs()), bits2(b.mesh.uvs()));
    assert_eq!(a.mesh.triangles(), b.mesh.triangles());
    assert_eq!(a.materials.emission_strength.to_bits(), b.materials.emission_strength.to_bits());
    let (ma, mb) = (&a.materials, &b.materials);
    for (x, y) in [(&ma.albedo, &mb.albedo), (&ma.metallic, &mb.metallic), (&ma.roughness, &mb.roughness), (&ma.emission, &mb.emission)] {
        assert!(x.same_shape(y));
        let worst = x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
        assert!(worst <= 1.0 / 255.0, "texel error {worst}");
    }
}

#[test]
fn fixtures_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in fixtures::FIXTURE_NAMES {
        let a = fixtures::by_name(name).unwrap();
        let path = dir.path().join(format!("{name}.glb"));
        save_asset(&a, &path).unwrap();
        let b = load_asset(&path).unwrap();
        assert_eq!(b.id, a.id);
        assert_round_trip(&a, &b);
    }
}

#[test]
fn emissive_strength_values_survive() {
    for s in [1.0, 1.75, 2.5] {
        let a = fixtures::sphere().with_strength(s);
        let bytes = save_asset_to_bytes(&a).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(text.contains("KHR_materials_emissive_strength"));
        assert!(text.contains(&format!("\"emissiveStrength\":{s}")), "strength {s} not written verbatim");
        assert_eq!(load_asset_from_bytes(&bytes, "s").unwrap().materials.emission_strength, s);
    }
}

#[test]
fn empty_mesh_is_rejected_on_save() {
    let mesh = Mesh::new(vec![[0.0; 3]], vec![[0.0, 0.0, 1.0]], vec![], vec![]).unwrap();
    let a = Asset::new("empty", mesh, MaterialSet::constant([0.5; 3], 0.0, 0.5), vec![]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(save_asset(&a, &dir.path().join("e.glb")), Err(AssetError::InvalidAsset(_))));
}

#[test]
fn bundled_fixture_files_match_generators() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for name in fixtures::FIXTURE_NAMES {
        let on_disk = std::fs::read(dir.join(format!("{name}.glb"))).unwrap();
        let generated = save_asset_to_bytes(&fixtures::by_name(name).unwrap()).unwrap();
        assert!(on_disk == generated, "{name}.glb is stale; run `cargo run --example write_fixtures`");
    }
}

/// Joint 8×8×8 histogram entropy computed directly from quantized bytes.
fn entropy_oracle(pixels: &[[u8; 3]]) -> f64 {
    let mut counts = std::collections::HashMap::new();
    for p in pixels {
        *counts.entry((p[0] / 32, p[1] / 32, p[2] / 32)).or_insert(0usize) += 1;
    }
    let n = pixels.len() as f64;
    counts.values().map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum()
}

#[test]
fn entropy_of_random_bytes_matches_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let px: Vec<[u8; 3]> = (0..64 * 64).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    // Byte b maps to the centre of its 1/256 slot so quantization is unambiguous.
    let to_f = |b: u8| (b as f32 + 0.5) / 256.0;
    let map = TextureMap::new(64, 64, 3, px.iter().flat_map(|p| p.map(to_f)).collect()).unwrap();
    let h = color_entropy(&map).unwrap();
    assert!((h - entropy_oracle(&px)).abs() < 0.1, "{h}");
    assert!(h <= 9.0);

    let mut shuffled: Vec<[f32; 3]> = px.iter().map(|p| p.map(to_f)).collect();
    shuffled.reverse();
    shuffled.swap(3, 4000);
    let perm = TextureMap::new(64, 64, 3, shuffled.into_iter().flatten().collect()).unwrap();
    assert!((color_entropy(&perm).unwrap() - h).abs() < 1e-12);
    assert!((color_entropy(&map.resize_nearest(128, 128)).unwrap() - h).abs() < 1e-9);
}

#[test]
fn emtx_round_trip() {
    let m = TextureMap::from_fn(5, 3, 3, |x, y| [x as f32 * 0.1, y as f32 * 0.2, 0.5]);
    let bytes = encode_emtx(&m);
    assert_eq!(&bytes[..4], b"EMTX");
    assert_eq!(bytes.len(), 16 + 5 * 3 * 3 * 4);
    assert_eq!(decode_emtx(&bytes).unwrap(), m);
}
