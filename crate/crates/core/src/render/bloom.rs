use serde::{Deserialize, Serialize};

/// Glare post-process: pixels brighter than `threshold` (luminance) are
/// blurred with a Gaussian of standard deviation `sigma_fraction · width`
/// pixels and added back scaled by `gain`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BloomConfig {
    pub threshold: f64,
    pub sigma_fraction: f64,
    pub gain: f64,
}

impl Default for BloomConfig {
    fn default() -> Self {
        Self { threshold: 1.0, sigma_fraction: 0.015, gain: 1.0 }
    }
}

fn luminance(c: &[f64]) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Applies bloom in place to an RGB row-major `width × height` buffer.
///
/// The bright pass keeps `c · max(0, 1 − threshold / L)`, which grows with
/// every channel of `c`, so the result is monotone in the input.
pub fn apply_bloom(rgb: &mut [f64], width: usize, height: usize, cfg: &BloomConfig) {
    if cfg.gain == 0.0 || width == 0 || height == 0 {
        return;
    }
    let mut bright: Vec<f64> = rgb
        .chunks_exact(3)
        .flat_map(|c| {
            let l = luminance(c);
            let w = if l > cfg.threshold { 1.0 - cfg.threshold / l } else { 0.0 };
            [c[0] * w, c[1] * w, c[2] * w]
        })
        .collect();
    if bright.iter().all(|&v| v == 0.0) {
        return;
    }
    let sigma = (cfg.sigma_fraction * width as f64).max(1e-3);
    let k = kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; bright.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for (j, w) in k.iter().enumerate() {
                let sx = (x as isize + j as isize - r).clamp(0, width as isize - 1) as usize;
                let i = (y * width + sx) * 3;
                for c in 0..3 {
                    acc[c] += w * bright[i + c];
                }
            }
            tmp[(y * width + x) * 3..][..3].copy_from_slice(&acc);
        }
    }
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for (j, w) in k.iter().enumerate() {
                let sy = (y as isize + j as isize - r).clamp(0, height as isize - 1) as usize;
                let i = (sy * width + x) * 3;
                for c in 0..3 {
                    acc[c] += w * tmp[i + c];
                }
            }
            bright[(y * width + x) * 3..][..3].copy_from_slice(&acc);
        }
    }
    for (o, b) in rgb.iter_mut().zip(&bright) {
        *o += cfg.gain * b;
    }
}
