use crate::asset::{luminance_rgb, TextureMap};

use super::MetricError;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shape(a: &TextureMap, b: &TextureMap) -> Result<(), MetricError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )))
    }
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// `10·log10(peak² / MSE)` over all channels, capped at 100 dB.
pub fn psnr(a: &TextureMap, b: &TextureMap, peak: f64) -> Result<f64, MetricError> {
    psnr_masked(a, b, peak, None)
}

/// PSNR restricted to pixels where `mask` is set; an empty mask counts as
/// identical.
pub fn psnr_masked(a: &TextureMap, b: &TextureMap, peak: f64, mask: Option<&[bool]>) -> Result<f64, MetricError> {
    check_shape(a, b)?;
    if let Some(m) = mask {
        if m.len() != a.pixel_count() {
            return Err(MetricError::ShapeMismatch(format!("mask of {} for {} pixels", m.len(), a.pixel_count())));
        }
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, (ta, tb)) in a.texels().zip(b.texels()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for (x, y) in ta.iter().zip(tb) {
            let d = *x as f64 - *y as f64;
            sum += d * d;
            n += 1;
        }
    }
    Ok(if n == 0 { PSNR_CAP_DB } else { psnr_from_mse(sum / n as f64, peak) })
}

/// Rec. 709 luma of RGB maps; single-channel maps pass through.
pub fn grayscale(img: &TextureMap) -> Vec<f64> {
    img.texels()
        .map(|t| match t.len() {
            1 => t[0] as f64,
            _ => luminance_rgb([t[0], t[1], t[2]]),
        })
        .collect()
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the normalized Gaussian window.
fn filter_valid(img: &[f64], w: usize, h: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = win.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| win[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| win[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5) of
/// the Rec. 709 grayscale images, dynamic range 1.
pub fn ssim(a: &TextureMap, b: &TextureMap) -> Result<f64, MetricError> {
    check_shape(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::ImageTooSmall { width: w, height: h });
    }
    let (ga, gb) = (grayscale(a), grayscale(b));
    let win = gaussian_window();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let (mu_a, ow, oh) = filter_valid(&ga, w, h, &win);
    let (mu_b, ..) = filter_valid(&gb, w, h, &win);
    let (aa, ..) = filter_valid(&prod(&ga, &ga), w, h, &win);
    let (bb, ..) = filter_valid(&prod(&gb, &gb), w, h, &win);
    let (ab, ..) = filter_valid(&prod(&ga, &gb), w, h, &win);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (ow * oh) as f64)
}

/// Pixels whose largest channel, clamped to `[0, 1]`, exceeds `threshold`
/// (the same rule as the luminous-area ratio).
pub fn luminous_mask(img: &TextureMap, threshold: f64) -> Vec<bool> {
    img.texels().map(|t| t.iter().map(|&v| (v as f64).clamp(0.0, 1.0)).fold(0.0, f64::max) > threshold).collect()
}

pub fn mask_dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// Dice coefficient of the thresholded emission regions; both empty → 1.
pub fn emission_dice(pred: &TextureMap, gt: &TextureMap, threshold: f64) -> Result<f64, MetricError> {
    check_shape(pred, gt)?;
    Ok(mask_dice(&luminous_mask(pred, threshold), &luminous_mask(gt, threshold)))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn strength_rmse(pairs: &[(f64, f64)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok((pairs.iter().map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / pairs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> f32) -> TextureMap {
        TextureMap::from_fn(w, h, 1, |x, y| [f(x, y); 3])
    }

    #[test]
    fn psnr_cases() {
        let a = gray(8, 8, |_, _| 0.25);
        let b = gray(8, 8, |_, _| 0.75);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        // Difference exactly 0.5 in f32: 10·log10(1/0.25).
        assert!((psnr(&a, &b, 1.0).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!(psnr(&a, &gray(4, 4, |_, _| 0.0), 1.0).is_err());
        let mask: Vec<bool> = (0..64).map(|i| i < 10).collect();
        let c = gray(8, 8, |x, y| if y * 8 + x < 10 { 0.25 } else { 0.9 });
        assert_eq!(psnr_masked(&a, &c, 1.0, Some(&mask)).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let a = gray(16, 16, |_, _| 0.25);
        let b = gray(16, 16, |_, _| 0.75);
        let c1 = 0.01f64.powi(2);
        let (m1, m2) = (0.25, 0.75);
        let expect = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(ssim(&gray(10, 20, |_, _| 0.0), &gray(10, 20, |_, _| 0.0)), Err(MetricError::ImageTooSmall { .. })));
    }

    #[test]
    fn ssim_of_negative_is_negative() {
        let a = gray(24, 24, |x, y| 0.5 + 0.4 * ((x as f32 * 0.7).sin() * (y as f32 * 0.4).cos()));
        let neg = TextureMap::from_fn(24, 24, 1, |x, y| [1.0 - a.texel(x, y)[0]; 3]);
        let s = ssim(&a, &neg).unwrap();
        assert!(s < 0.0, "{s}");
        assert!((ssim(&neg, &a).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn dice_cases() {
        let m = |f: fn(u32) -> bool| TextureMap::from_fn(4, 1, 1, move |x, _| [if f(x) { 1.0 } else { 0.0 }; 3]);
        let a = m(|x| x < 2);
        assert_eq!(emission_dice(&a, &a, 0.01).unwrap(), 1.0);
        assert_eq!(emission_dice(&a, &m(|x| x >= 2), 0.01).unwrap(), 0.0);
        assert_eq!(emission_dice(&a, &m(|x| x == 1 || x == 2), 0.01).unwrap(), 0.5);
        let empty = m(|_| false);
        assert_eq!(emission_dice(&empty, &empty, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn cosine_and_rmse() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 2.0], &[-2.0, -4.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_similarity(&[0.0], &[1.0]), Err(MetricError::ZeroVector)));
        assert_eq!(strength_rmse(&[(1.0, 1.0), (2.5, 2.5)]).unwrap(), 0.0);
        assert_eq!(strength_rmse(&[(1.5, 1.0), (2.0, 2.5)]).unwrap(), 0.5);
        assert!(matches!(strength_rmse(&[]), Err(MetricError::EmptyInput)));
    }
}
