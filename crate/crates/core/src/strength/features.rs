use crate::asset::TextureMap;

/// Maps an image to a fixed-length feature vector.
pub trait FeatureProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, image: &TextureMap) -> Vec<f64>;
}

/// Hand-crafted luminance statistics of a linear HDR image:
///
/// 0-2. fraction of pixels with luminance above 0.01, 0.05, 0.2
/// 3. mean luminance
/// 4. max luminance
/// 5. mean luminance inside the luminous area (luminance > 0.2)
/// 6. luminance variance
/// 7. mean luminance of the 2-pixel ring around the luminous area
#[derive(Clone, Copy, Debug, Default)]
pub struct StatFeatures;

pub const STAT_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.2];
pub const HALO_RING: i64 = 2;

impl FeatureProvider for StatFeatures {
    fn name(&self) -> &str {
        "stat8"
    }

    fn dim(&self) -> usize {
        8
    }

    fn extract(&self, image: &TextureMap) -> Vec<f64> {
        let lum = image.luminance();
        let n = lum.len();
        if n == 0 {
            return vec![0.0; 8];
        }
        let nf = n as f64;
        let mut f = Vec::with_capacity(8);
        for thr in STAT_THRESHOLDS {
            f.push(lum.iter().filter(|&&l| l > thr).count() as f64 / nf);
        }
        let mean = lum.iter().sum::<f64>() / nf;
        f.push(mean);
        f.push(lum.iter().copied().fold(0.0, f64::max));
        let luminous: Vec<bool> = lum.iter().map(|&l| l > STAT_THRESHOLDS[2]).collect();
        f.push(mean_where(&lum, &luminous));
        f.push(lum.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / nf);
        let ring = dilation_ring(&luminous, image.width() as i64, image.height() as i64, HALO_RING);
        f.push(mean_where(&lum, &ring));
        f
    }
}

fn mean_where(values: &[f64], mask: &[bool]) -> f64 {
    let (s, c) = values.iter().zip(mask).filter(|(_, &m)| m).fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// Pixels within Chebyshev distance `r` of the mask but outside it.
fn dilation_ring(mask: &[bool], w: i64, h: i64, r: i64) -> Vec<bool> {
    let mut ring = vec![false; mask.len()];
    for y in 0..h {
        for x in 0..w {
            if mask[(y * w + x) as usize] {
                continue;
            }
            'search: for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x + dx, y + dy);
                    if (0..w).contains(&xx) && (0..h).contains(&yy) && mask[(yy * w + xx) as usize] {
                        ring[(y * w + x) as usize] = true;
                        break 'search;
                    }
                }
            }
        }
    }
    ring
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_image_is_zero() {
        let f = StatFeatures.extract(&TextureMap::filled(8, 8, &[0.0, 0.0, 0.0]));
        assert_eq!(f, vec![0.0; 8]);
    }

    #[test]
    fn bright_square_with_ring() {
        // 10×10 image, 2×2 bright block of luminance 3 at (4..6, 4..6),
        // 0.1 elsewhere.
        let img = TextureMap::from_fn(10, 10, 3, |x, y| {
            if (4..6).contains(&x) && (4..6).contains(&y) {
                [3.0; 3]
            } else {
                [0.1; 3]
            }
        });
        let f = StatFeatures.extract(&img);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 1.0);
        assert!((f[2] - 0.04).abs() < 1e-12);
        let mean = (4.0 * 3.0 + 96.0 * 0.1) / 100.0;
        assert!((f[3] - mean).abs() < 1e-6);
        assert!((f[4] - 3.0).abs() < 1e-6);
        assert!((f[5] - 3.0).abs() < 1e-6);
        // Ring of width 2 around a 2×2 block: 6×6 − 4 = 32 pixels at 0.1.
        assert!((f[7] - 0.1).abs() < 1e-6);
        assert_eq!(dilation_ring(&[false, true, false, false, false], 5, 1, 2), vec![true, false, true, true, false]);
    }
}
