use super::AssetError;

/// A row-major image of `f32` samples with 1 or 3 channels.
///
/// Material maps keep their samples in `[0, 1]`; render passes may hold
/// unclamped HDR values or signed vectors (normals, positions). The only
/// invariant enforced here is that every sample is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureMap {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<f32>,
}

impl TextureMap {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<f32>) -> Result<Self, AssetError> {
        if width == 0 || height == 0 {
            return Err(AssetError::EmptyTexture);
        }
        if channels != 1 && channels != 3 {
            return Err(AssetError::InvalidAsset(format!(
                "texture must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(AssetError::InvalidAsset(format!(
                "texture data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(AssetError::InvalidAsset(format!("non-finite texture sample {bad}")));
        }
        Ok(Self { width, height, channels, data })
    }

    /// A 1×1 map holding a constant value.
    pub fn constant(value: &[f32]) -> Self {
        Self::filled(1, 1, value)
    }

    /// A `width`×`height` map where every texel equals `value`.
    pub fn filled(width: u32, height: u32, value: &[f32]) -> Self {
        assert!(value.len() == 1 || value.len() == 3, "texel must have 1 or 3 channels");
        assert!(width > 0 && height > 0, "texture must be non-empty");
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * value.len());
        for _ in 0..n {
            data.extend_from_slice(value);
        }
        Self { width, height, channels: value.len() as u8, data }
    }

    /// Builds a map by evaluating `f(x, y)` at every texel.
    pub fn from_fn<F>(width: u32, height: u32, channels: u8, mut f: F) -> Self
    where
        F: FnMut(u32, u32) -> [f32; 3],
    {
        assert!(channels == 1 || channels == 3);
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                let t = f(x, y);
                data.extend_from_slice(&t[..channels as usize]);
            }
        }
        Self { width, height, channels, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// True for 1×1 maps, which stand in for constant material factors.
    pub fn is_constant(&self) -> bool {
        self.width == 1 && self.height == 1
    }

    pub fn same_shape(&self, other: &TextureMap) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn texel(&self, x: u32, y: u32) -> &[f32] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// Texel as RGB; single-channel maps are replicated.
    pub fn rgb(&self, x: u32, y: u32) -> [f32; 3] {
        let t = self.texel(x, y);
        if t.len() == 1 {
            [t[0]; 3]
        } else {
            [t[0], t[1], t[2]]
        }
    }

    /// Iterator over texels as slices of `channels` samples.
    pub fn texels(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.channels as usize)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Nearest-neighbour lookup with repeat wrapping; `(u, v)` in texture space,
    /// `v = 0` at the top row.
    pub fn sample_nearest(&self, u: f64, v: f64) -> [f32; 3] {
        let x = wrap_index((u * self.width as f64).floor() as i64, self.width);
        let y = wrap_index((v * self.height as f64).floor() as i64, self.height);
        self.rgb(x, y)
    }

    /// Bilinear lookup with repeat wrapping.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> [f32; 3] {
        if self.is_constant() {
            return self.rgb(0, 0);
        }
        let fx = u * self.width as f64 - 0.5;
        let fy = v * self.height as f64 - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = (fx - x0) as f32;
        let ty = (fy - y0) as f32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let xa = wrap_index(x0, self.width);
        let xb = wrap_index(x0 + 1, self.width);
        let ya = wrap_index(y0, self.height);
        let yb = wrap_index(y0 + 1, self.height);
        let (a, b, c, d) = (self.rgb(xa, ya), self.rgb(xb, ya), self.rgb(xa, yb), self.rgb(xb, yb));
        let mut out = [0.0f32; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bottom = c[k] + (d[k] - c[k]) * tx;
            out[k] = top + (bottom - top) * ty;
        }
        out
    }

    /// Nearest-neighbour resample to a new resolution.
    pub fn resize_nearest(&self, width: u32, height: u32) -> TextureMap {
        let c = self.channels;
        TextureMap::from_fn(width, height, c, |x, y| {
            let sx = ((x as u64 * self.width as u64) / width as u64) as u32;
            let sy = ((y as u64 * self.height as u64) / height as u64) as u32;
            self.rgb(sx.min(self.width - 1), sy.min(self.height - 1))
        })
    }

    /// Expands a single-channel map to three channels.
    pub fn to_rgb(&self) -> TextureMap {
        if self.channels == 3 {
            return self.clone();
        }
        TextureMap::from_fn(self.width, self.height, 3, |x, y| self.rgb(x, y))
    }

    /// Elementwise transform.
    pub fn map<F: Fn(f32) -> f32>(&self, f: F) -> TextureMap {
        TextureMap {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: f32) -> TextureMap {
        self.map(|v| v * s)
    }

    /// Rec. 709 luminance per pixel (single-channel maps pass through).
    pub fn luminance(&self) -> Vec<f64> {
        self.texels()
            .map(|t| if t.len() == 1 { t[0] as f64 } else { luminance_rgb([t[0], t[1], t[2]]) })
            .collect()
    }
}

pub fn luminance_rgb(c: [f32; 3]) -> f64 {
    0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64
}

fn wrap_index(i: i64, n: u32) -> u32 {
    i.rem_euclid(n as i64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(TextureMap::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(TextureMap::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(matches!(TextureMap::new(0, 2, 1, vec![]), Err(AssetError::EmptyTexture)));
        assert!(TextureMap::new(1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn bilinear_hits_texel_centers() {
        let t = TextureMap::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(t.sample_bilinear(0.25, 0.5)[0], 0.0);
        assert_eq!(t.sample_bilinear(0.75, 0.5)[0], 1.0);
        assert!((t.sample_bilinear(0.5, 0.5)[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nearest_resize_upsample_repeats() {
        let t = TextureMap::new(2, 1, 1, vec![0.2, 0.8]).unwrap();
        let up = t.resize_nearest(4, 2);
        assert_eq!(up.data(), &[0.2, 0.2, 0.8, 0.8, 0.2, 0.2, 0.8, 0.8]);
    }
}
