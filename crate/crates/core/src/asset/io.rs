//! Texture payload formats: raw `EMTX` float dumps, linear EXR, tone-mapped PNG.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Rgb32FImage, RgbImage};

use super::color::linear_to_srgb;
use super::{AssetError, TextureMap};

const EMTX_MAGIC: &[u8; 4] = b"EMTX";

/// Serializes a map as `"EMTX" | u32 w | u32 h | u32 c | f32 samples`, all little-endian.
pub fn encode_emtx(map: &TextureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + map.data().len() * 4);
    out.extend_from_slice(EMTX_MAGIC);
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    out.extend_from_slice(&(map.channels() as u32).to_le_bytes());
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_emtx(bytes: &[u8]) -> Result<TextureMap, AssetError> {
    if bytes.len() < 16 || &bytes[..4] != EMTX_MAGIC {
        return Err(AssetError::MalformedFile("missing EMTX header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h, c) = (word(4), word(8), word(12));
    let n = w as usize * h as usize * c as usize;
    let body = &bytes[16..];
    if body.len() != n * 4 {
        return Err(AssetError::MalformedFile(format!(
            "EMTX body holds {} bytes, header implies {}",
            body.len(),
            n * 4
        )));
    }
    let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let c = u8::try_from(c).map_err(|_| AssetError::MalformedFile(format!("bad channel count {c}")))?;
    TextureMap::new(w, h, c, data)
}

pub fn write_emtx(map: &TextureMap, path: &Path) -> Result<(), AssetError> {
    Ok(std::fs::write(path, encode_emtx(map))?)
}

pub fn read_emtx(path: &Path) -> Result<TextureMap, AssetError> {
    decode_emtx(&std::fs::read(path)?)
}

/// Writes a linear 32-bit float RGB EXR; single-channel maps are replicated.
pub fn write_exr(map: &TextureMap, path: &Path) -> Result<(), AssetError> {
    let rgb = map.to_rgb();
    let img = Rgb32FImage::from_raw(rgb.width(), rgb.height(), rgb.into_data())
        .expect("buffer length matches dimensions");
    let mut bytes = Cursor::new(Vec::new());
    DynamicImage::ImageRgb32F(img)
        .write_to(&mut bytes, ImageFormat::OpenExr)
        .map_err(|e| AssetError::Image(e.to_string()))?;
    Ok(std::fs::write(path, bytes.into_inner())?)
}

/// Reads an EXR as a 3-channel linear map.
pub fn read_exr(path: &Path) -> Result<TextureMap, AssetError> {
    let bytes = std::fs::read(path)?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::OpenExr)
        .map_err(|e| AssetError::Image(e.to_string()))?
        .into_rgb32f();
    let (w, h) = img.dimensions();
    TextureMap::new(w, h, 3, img.into_raw())
}

/// Reinhard tone mapping followed by sRGB encoding to 8-bit PNG bytes.
pub fn encode_png_tonemapped(map: &TextureMap) -> Result<Vec<u8>, AssetError> {
    let rgb = map.to_rgb();
    let bytes: Vec<u8> = rgb
        .data()
        .iter()
        .map(|&v| {
            let v = v.max(0.0);
            (linear_to_srgb(v / (1.0 + v)) * 255.0).round() as u8
        })
        .collect();
    let img = RgbImage::from_raw(rgb.width(), rgb.height(), bytes).expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageRgb8(img)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AssetError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_png_tonemapped(map: &TextureMap, path: &Path) -> Result<(), AssetError> {
    Ok(std::fs::write(path, encode_png_tonemapped(map)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emtx_header_layout() {
        let map = TextureMap::new(2, 1, 3, vec![0.0, 0.5, 1.0, 2.0, -1.0, 3.5]).unwrap();
        let bytes = encode_emtx(&map);
        assert_eq!(&bytes[..4], b"EMTX");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(decode_emtx(&bytes).unwrap(), map);
    }

    #[test]
    fn emtx_rejects_truncation() {
        let map = TextureMap::filled(2, 2, &[1.0]);
        let bytes = encode_emtx(&map);
        assert!(decode_emtx(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_emtx(b"NOPE").is_err());
    }

    #[test]
    fn exr_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.exr");
        let map = TextureMap::from_fn(5, 3, 3, |x, y| [x as f32 * 1.7, -(y as f32), 1e-3]);
        write_exr(&map, &path).unwrap();
        assert_eq!(read_exr(&path).unwrap(), map);
    }
}
