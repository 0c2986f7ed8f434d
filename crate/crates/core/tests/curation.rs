use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use emberforge::asset::{Asset, MaterialSet, Mesh, TextureMap};
use emberforge::curation::*;
use emberforge::fixtures;
use emberforge::render::{RenderConfig, Scene};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A flat 100×100-vertex grid with the given albedo.
fn dense_asset(albedo: TextureMap) -> Asset {
    let n = 100;
    let mut pos = Vec::new();
    let mut uv = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (u, v) = (i as f32 / (n - 1) as f32, j as f32 / (n - 1) as f32);
            pos.push([u - 0.5, v - 0.5, 0.0]);
            uv.push([u, 1.0 - v]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = (j * n + i) as u32;
            tris.push([a, a + 1, a + n as u32 + 1]);
            tris.push([a, a + n as u32 + 1, a + n as u32]);
        }
    }
    let mesh = Mesh::with_computed_normals(pos, uv, tris).unwrap();
    let mut m = MaterialSet::constant([0.5; 3], 0.0, 0.5);
    m.albedo = albedo;
    Asset::new("dense", mesh, m, vec![]).unwrap()
}

#[test]
fn coarse_filter_cases() {
    let cfg = CurationConfig { min_entropy: 1.0, ..Default::default() };
    let gray = dense_asset(TextureMap::filled(32, 32, &[0.5; 3]));
    assert_eq!(gray.mesh.vertex_count(), 10_000);
    assert_eq!(coarse_filter(&gray, &cfg), Err(RejectReason::Entropy));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = TextureMap::from_fn(64, 64, 3, |_, _| [rng.random(), rng.random(), rng.random()]);
    assert_eq!(coarse_filter(&dense_asset(noise), &cfg), Ok(()));
    assert_eq!(coarse_filter(&fixtures::quad(), &cfg), Err(RejectReason::VertexCount));
}

#[test]
fn curate_short_circuits() {
    let cfg = CurationConfig::default();
    let s = quick_screener();
    let v = curate(&fixtures::quad(), &cfg, &MockClient::AlwaysSingle, &s).unwrap();
    assert!(!v.passed_coarse && v.passed_emission.is_none() && v.valid_strengths.is_none() && !v.accepted);
    assert_eq!(v.rejection_reason, Some(RejectReason::VertexCount));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = TextureMap::from_fn(64, 64, 3, |_, _| [rng.random(), rng.random(), rng.random()]);
    let v = curate(&dense_asset(noise), &cfg, &MockClient::AlwaysSingle, &s).unwrap();
    assert!(v.passed_coarse);
    assert_eq!(v.passed_emission, Some(false));
    assert_eq!(v.rejection_reason, Some(RejectReason::ZeroEmissionMap));
}

fn quick_screener() -> Screener {
    Screener { config: RenderConfig { resolution: 32, samples_per_pixel: 2, ..Default::default() }, ..Default::default() }
}

#[test]
fn led_panel_is_accepted_and_deterministic() {
    let a = fixtures::led_panel_wall();
    let cfg = CurationConfig::default();
    let s = quick_screener();
    let v = curate(&a, &cfg, &MockClient::AlwaysSingle, &s).unwrap();
    assert!(v.accepted, "{v:?}");
    let valid = v.valid_strengths.clone().unwrap();
    assert!(!valid.is_empty() && valid.iter().all(|x| cfg.strength_levels.contains(x)));
    assert_eq!(curate(&a, &cfg, &MockClient::AlwaysSingle, &s).unwrap(), v);

    let m = curate(&a, &cfg, &MockClient::AlwaysMultiple, &s).unwrap();
    assert_eq!(m.single_object, Some(ObjectCount::Multiple));
    assert_eq!(m.rejection_reason, Some(RejectReason::MultipleObjects));
    assert!(!m.accepted);
}

#[test]
fn renderer_ratios_are_monotone_and_valid_set_contiguous() {
    for asset in [fixtures::led_panel_wall(), fixtures::sphere()] {
        let scene = Scene::new(&asset).unwrap();
        let cfg = CurationConfig::default();
        let views = RenderConfig { resolution: 48, ..Default::default() }.views_for(&scene);
        let passes = emission_passes(&scene, &views, &cfg.strength_levels).unwrap();
        for v in 0..views.len() {
            let r: Vec<f64> = passes.iter().map(|(_, p)| luminous_ratio(&p[v], 0.01)).collect();
            assert!(r.windows(2).all(|w| w[1] >= w[0]), "view {v}: {r:?}");
        }
        let valid = select_strengths(&passes, &cfg).unwrap();
        let idx: Vec<usize> =
            valid.iter().map(|s| cfg.strength_levels.iter().position(|x| x == s).unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1), "{valid:?}");
    }
}

/// Counts luminous pixels with an explicit double loop.
fn ratio_oracle(m: &TextureMap, threshold: f64) -> f64 {
    let mut hits = 0;
    for y in 0..m.height() {
        for x in 0..m.width() {
            let t = m.texel(x, y);
            if t.iter().any(|&c| (c.clamp(0.0, 1.0) as f64) > threshold) {
                hits += 1;
            }
        }
    }
    hits as f64 / (m.width() * m.height()) as f64
}

#[test]
fn luminous_ratio_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let m = TextureMap::from_fn(17, 23, 3, |_, _| std::array::from_fn(|_| rng.random::<f32>().powi(6) * 1.5 - 0.1));
        assert_eq!(luminous_ratio(&m, 0.01), ratio_oracle(&m, 0.01));
    }
}

/// 10×10 emission pass with exactly `k` luminous pixels (ratio k/100).
fn pass_with(k: usize) -> TextureMap {
    TextureMap::from_fn(10, 10, 3, |x, y| if ((y * 10 + x) as usize) < k { [0.5, 0.0, 0.0] } else { [0.0; 3] })
}

#[test]
fn selection_examples() {
    let cfg = CurationConfig::default();
    let levels = cfg.strength_levels.clone();
    let all_30: Vec<(f64, Vec<TextureMap>)> = levels.iter().map(|&s| (s, vec![pass_with(30); 10])).collect();
    assert_eq!(select_strengths(&all_30, &cfg).unwrap(), levels);
    let mut glare = all_30.clone();
    glare.last_mut().unwrap().1[4] = pass_with(85);
    assert_eq!(select_strengths(&glare, &cfg).unwrap(), levels[..6].to_vec());
    let mut dim = all_30;
    dim[0].1[0] = pass_with(0);
    assert_eq!(select_strengths(&dim, &cfg).unwrap(), levels[1..].to_vec());
}

proptest! {
    #[test]
    fn scaling_up_never_lowers_ratio(vals in prop::collection::vec(0.0f32..1.0, 3 * 64), c in 1.0f32..20.0) {
        let m = TextureMap::new(8, 8, 3, vals).unwrap();
        prop_assert!(luminous_ratio(&m.scaled(c), 0.01) >= luminous_ratio(&m, 0.01));
    }
}

/// One-shot HTTP server answering with the recorded classifier response;
/// returns the URL and a handle yielding the request body.
fn stub_server(response: &'static str) -> (String, std::thread::JoinHandle<(String, Vec<u8>)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/classify", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        let mut reader = BufReader::new(stream);
        let mut head = String::new();
        let mut len = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            head.push_str(&line);
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let mut stream = reader.into_inner();
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            response.len(),
            response
        )
        .unwrap();
        (head, body)
    });
    (url, handle)
}

const RECORDED: &str = include_str!("data/classifier_single.json");

#[test]
fn http_client_against_recorded_stub() {
    let (url, handle) = stub_server(RECORDED);
    let client = HttpClient::new(url, Duration::from_secs(20));
    let a = fixtures::led_panel_wall();
    let scene = Scene::new(&a).unwrap();
    let got = screen_single_object(&a, &scene, &client, &quick_screener()).unwrap();
    assert_eq!(got, ObjectCount::Single);
    let (head, body) = handle.join().unwrap();
    assert!(head.starts_with("POST /classify"));
    assert!(head.to_ascii_lowercase().contains("multipart/form-data"));
    let text = String::from_utf8_lossy(&body);
    for (name, _) in SCREENING_VIEWS {
        assert!(text.contains(&format!("name=\"{name}\"")), "missing part {name}");
    }
    assert_eq!(body.windows(8).filter(|w| *w == b"\x89PNG\r\n\x1a\n").count(), 4);
}

#[test]
fn unreachable_classifier_flags_unknown() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpClient::new(format!("http://127.0.0.1:{port}/x"), Duration::from_secs(2));
    let a = fixtures::led_panel_wall();
    let v = curate(&a, &CurationConfig::default(), &client, &quick_screener()).unwrap();
    assert_eq!(v.single_object, Some(ObjectCount::Unknown));
    assert_eq!(v.rejection_reason, Some(RejectReason::SingleObjectUnknown));
    assert!(!v.accepted);
}

#[test]
fn manifest_is_sorted_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let s = quick_screener();
    let cfg = CurationConfig::default();
    let verdicts: Vec<CurationVerdict> = [fixtures::sphere(), fixtures::quad()]
        .iter()
        .map(|a| curate(a, &cfg, &MockClient::default_keywords(), &s).unwrap())
        .collect();
    write_manifest(&path, &verdicts).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back.iter().map(|v| v.asset_id.as_str()).collect::<Vec<_>>(), ["quad", "sphere"]);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
}
