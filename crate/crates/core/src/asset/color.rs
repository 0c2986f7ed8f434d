//! Colour-space transforms and texture statistics.

use super::{AssetError, TextureMap};

/// IEC 61966-2-1 sRGB decode.
pub fn srgb_to_linear(c: f32) -> f32 {
    let c = c as f64;
    let l = if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) };
    l as f32
}

/// IEC 61966-2-1 sRGB encode.
pub fn linear_to_srgb(l: f32) -> f32 {
    let l = (l as f64).clamp(0.0, 1.0);
    let c = if l <= 0.003_130_8 { l * 12.92 } else { 1.055 * l.powf(1.0 / 2.4) - 0.055 };
    c as f32
}

pub const ENTROPY_BINS_PER_CHANNEL: usize = 8;

fn bin(v: f32) -> usize {
    let b = (v.clamp(0.0, 1.0) * ENTROPY_BINS_PER_CHANNEL as f32) as usize;
    b.min(ENTROPY_BINS_PER_CHANNEL - 1)
}

/// Shannon entropy, in bits, of the joint 8×8×8 RGB histogram of a texture.
pub fn color_entropy(map: &TextureMap) -> Result<f64, AssetError> {
    if map.channels() != 3 {
        return Err(AssetError::InvalidAsset(format!(
            "colour entropy needs an RGB map, got {} channel(s)",
            map.channels()
        )));
    }
    let n = map.pixel_count();
    if n == 0 {
        return Err(AssetError::EmptyTexture);
    }
    let mut hist = [0usize; ENTROPY_BINS_PER_CHANNEL * ENTROPY_BINS_PER_CHANNEL * ENTROPY_BINS_PER_CHANNEL];
    for t in map.texels() {
        let idx = (bin(t[0]) * ENTROPY_BINS_PER_CHANNEL + bin(t[1])) * ENTROPY_BINS_PER_CHANNEL + bin(t[2]);
        hist[idx] += 1;
    }
    let total = n as f64;
    let h = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_round_trip() {
        for i in 0..=1000 {
            let x = i as f32 / 1000.0;
            assert!((srgb_to_linear(linear_to_srgb(x)) - x).abs() < 1e-6);
        }
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert!((srgb_to_linear(1.0) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn uniform_texture_has_zero_entropy() {
        let t = TextureMap::filled(16, 16, &[0.3, 0.3, 0.3]);
        assert_eq!(color_entropy(&t).unwrap(), 0.0);
    }

    #[test]
    fn two_equal_colors_give_one_bit() {
        let t = TextureMap::from_fn(8, 8, 3, |x, _| if x < 4 { [0.0; 3] } else { [1.0; 3] });
        assert!((color_entropy(&t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_channel() {
        assert!(color_entropy(&TextureMap::filled(2, 2, &[0.5])).is_err());
    }
}
