use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{recover_clean, DiffusionError, NoiseSchedule, Tensor4};

/// Smoothing constant of the soft Dice quotient.
pub const DICE_EPS: f64 = 1e-6;
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftMaskParams {
    pub tau: f64,
    pub k: f64,
}

impl Default for SoftMaskParams {
    fn default() -> Self {
        Self { tau: 0.01, k: 50.0 }
    }
}

impl SoftMaskParams {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(self.k > 0.0 && self.k.is_finite()) || !self.tau.is_finite() {
            return Err(DiffusionError::InvalidParams(format!("k must be positive and finite, got {}", self.k)));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Elementwise `σ(k (x − τ))`.
pub fn soft_mask(values: &Tensor4, params: &SoftMaskParams) -> Tensor4 {
    values.map(|x| sigmoid(params.k * (x - params.tau)))
}

/// `1 − (2 Σ p g + ε) / (Σ p + Σ g + ε)`.
pub fn dice_loss(pred: &Tensor4, target: &Tensor4) -> Result<f64, DiffusionError> {
    pred.check_same_shape(target)?;
    let (n, s) = dice_terms(pred.data(), target.data());
    Ok(1.0 - n / s)
}

fn dice_terms(p: &[f64], g: &[f64]) -> (f64, f64) {
    let inter: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let total: f64 = p.iter().sum::<f64>() + g.iter().sum::<f64>();
    (2.0 * inter + DICE_EPS, total + DICE_EPS)
}

/// Frozen linear decoder followed by nearest-neighbour upsampling.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyDecoder {
    latent_channels: usize,
    /// `pixel_channels × latent_channels`, row-major.
    weight: Vec<f64>,
    bias: Vec<f64>,
    upsample: usize,
    emission_channels: Range<usize>,
}

impl ToyDecoder {
    pub fn new(
        latent_channels: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        upsample: usize,
        emission_channels: Range<usize>,
    ) -> Result<Self, DiffusionError> {
        if latent_channels == 0 || upsample == 0 || bias.is_empty() {
            return Err(DiffusionError::InvalidParams("decoder dimensions must be positive".into()));
        }
        if weight.len() != bias.len() * latent_channels {
            return Err(DiffusionError::ShapeMismatch(format!(
                "decoder weight has {} entries, expected {}",
                weight.len(),
                bias.len() * latent_channels
            )));
        }
        if emission_channels.is_empty() || emission_channels.end > bias.len() {
            return Err(DiffusionError::InvalidParams("emission channel range out of bounds".into()));
        }
        Ok(Self { latent_channels, weight, bias, upsample, emission_channels })
    }

    /// Six pixel channels (albedo RGB then emission RGB), 2× upsampling,
    /// Gaussian weights scaled by `1/√C` and a negative emission bias so
    /// that emissive regions are sparse.
    pub fn random(latent_channels: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (latent_channels as f64).sqrt();
        let weight = (0..6 * latent_channels).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let bias = vec![0.5, 0.5, 0.5, -0.3, -0.3, -0.3];
        Self::new(latent_channels, weight, bias, 2, 3..6).expect("valid toy decoder")
    }

    pub fn latent_channels(&self) -> usize {
        self.latent_channels
    }

    pub fn pixel_channels(&self) -> usize {
        self.bias.len()
    }

    pub fn upsample(&self) -> usize {
        self.upsample
    }

    pub fn emission_channels(&self) -> Range<usize> {
        self.emission_channels.clone()
    }

    pub fn weight(&self, p: usize, c: usize) -> f64 {
        self.weight[p * self.latent_channels + c]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn check_latent(&self, z: &Tensor4) -> Result<(), DiffusionError> {
        if z.shape()[1] != self.latent_channels {
            return Err(DiffusionError::ShapeMismatch(format!(
                "latent has {} channels, decoder expects {}",
                z.shape()[1],
                self.latent_channels
            )));
        }
        Ok(())
    }

    pub fn decode(&self, z: &Tensor4) -> Result<Tensor4, DiffusionError> {
        self.check_latent(z)?;
        let [v, c, h, w] = z.shape();
        let f = self.upsample;
        let pc = self.pixel_channels();
        let mut out = Tensor4::zeros([v, pc, h * f, w * f]);
        for vi in 0..v {
            for y in 0..h {
                for x in 0..w {
                    for p in 0..pc {
                        let mut acc = self.bias[p];
                        for ci in 0..c {
                            acc += self.weight(p, ci) * z.get([vi, ci, y, x]);
                        }
                        for dy in 0..f {
                            for dx in 0..f {
                                out.set([vi, p, y * f + dy, x * f + dx], acc);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pulls a gradient on decoded pixels back to the latent.
    pub fn backward(&self, grad_pixels: &Tensor4) -> Tensor4 {
        let [v, pc, hh, ww] = grad_pixels.shape();
        let f = self.upsample;
        let (h, w) = (hh / f, ww / f);
        let mut out = Tensor4::zeros([v, self.latent_channels, h, w]);
        for vi in 0..v {
            for y in 0..h {
                for x in 0..w {
                    for p in 0..pc {
                        let mut g = 0.0;
                        for dy in 0..f {
                            for dx in 0..f {
                                g += grad_pixels.get([vi, p, y * f + dy, x * f + dx]);
                            }
                        }
                        if g == 0.0 {
                            continue;
                        }
                        for ci in 0..self.latent_channels {
                            let i = out.index([vi, ci, y, x]);
                            out.data_mut()[i] += self.weight(p, ci) * g;
                        }
                    }
                }
            }
        }
        out
    }

    /// Channel-max over the emission channels and the winning channel per
    /// pixel (lowest index on ties).
    pub fn emission_intensity(&self, decoded: &Tensor4) -> (Tensor4, Vec<usize>) {
        let [v, _, h, w] = decoded.shape();
        let mut out = Tensor4::zeros([v, 1, h, w]);
        let mut arg = Vec::with_capacity(v * h * w);
        for vi in 0..v {
            for y in 0..h {
                for x in 0..w {
                    let mut best = (self.emission_channels.start, f64::NEG_INFINITY);
                    for p in self.emission_channels.clone() {
                        let val = decoded.get([vi, p, y, x]);
                        if val > best.1 {
                            best = (p, val);
                        }
                    }
                    out.set([vi, 0, y, x], best.1);
                    arg.push(best.0);
                }
            }
        }
        (out, arg)
    }

    /// Soft emission mask of a latent.
    pub fn soft_emission_mask(&self, z: &Tensor4, params: &SoftMaskParams) -> Result<Tensor4, DiffusionError> {
        let (e, _) = self.emission_intensity(&self.decode(z)?);
        Ok(soft_mask(&e, params))
    }

    /// Hard emission mask (`1` where the channel-max exceeds `τ`).
    pub fn hard_emission_mask(&self, z: &Tensor4, tau: f64) -> Result<Tensor4, DiffusionError> {
        let (e, _) = self.emission_intensity(&self.decode(z)?);
        Ok(e.map(|x| if x > tau { 1.0 } else { 0.0 }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_mcp: f64,
    pub l_seg: f64,
    pub l_total: f64,
    pub lambda: f64,
}

impl LossReport {
    pub fn new(l_mcp: f64, l_seg: f64, lambda: f64) -> Self {
        Self { l_mcp, l_seg, l_total: l_mcp + lambda * l_seg, lambda }
    }
}

/// Inputs shared by the loss terms for one noisy latent.
#[derive(Clone, Copy)]
pub struct LossContext<'a> {
    pub v_target: &'a Tensor4,
    pub zt: &'a Tensor4,
    pub t: usize,
    pub schedule: &'a NoiseSchedule,
    pub decoder: &'a ToyDecoder,
    pub params: &'a SoftMaskParams,
}

impl LossContext<'_> {
    fn check(&self, v_pred: &Tensor4) -> Result<(), DiffusionError> {
        self.params.validate()?;
        v_pred.check_same_shape(self.v_target)?;
        v_pred.check_same_shape(self.zt)
    }

    fn target_mask(&self) -> Result<Tensor4, DiffusionError> {
        let z = recover_clean(self.zt, self.v_target, self.t, self.schedule)?;
        self.decoder.soft_emission_mask(&z, self.params)
    }

    /// Decoded image of the clean latent recovered from `v`.
    pub fn decode_recovered(&self, v: &Tensor4) -> Result<Tensor4, DiffusionError> {
        self.decoder.decode(&recover_clean(self.zt, v, self.t, self.schedule)?)
    }
}

/// Mean squared velocity error.
pub fn mcp_loss(v_pred: &Tensor4, v_target: &Tensor4) -> Result<f64, DiffusionError> {
    v_pred.check_same_shape(v_target)?;
    let n = v_pred.len().max(1) as f64;
    Ok(v_pred.data().iter().zip(v_target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

fn mcp_grad(v_pred: &Tensor4, v_target: &Tensor4) -> Tensor4 {
    let n = v_pred.len().max(1) as f64;
    v_pred.axpby(2.0 / n, v_target, -2.0 / n).expect("shapes checked")
}

pub fn segmentation_loss(v_pred: &Tensor4, ctx: &LossContext) -> Result<f64, DiffusionError> {
    ctx.check(v_pred)?;
    let (e, _) = ctx.decoder.emission_intensity(&ctx.decode_recovered(v_pred)?);
    dice_loss(&soft_mask(&e, ctx.params), &ctx.target_mask()?)
}

/// Segmentation loss and its gradient with respect to `v_pred`.
pub fn segmentation_loss_grad(v_pred: &Tensor4, ctx: &LossContext) -> Result<(f64, Tensor4), DiffusionError> {
    ctx.check(v_pred)?;
    let decoded = ctx.decode_recovered(v_pred)?;
    let (e, arg) = ctx.decoder.emission_intensity(&decoded);
    let p = soft_mask(&e, ctx.params);
    let g = ctx.target_mask()?;
    let (num, den) = dice_terms(p.data(), g.data());
    let loss = 1.0 - num / den;

    let [v, pc, h, w] = decoded.shape();
    let mut grad_pixels = Tensor4::zeros([v, pc, h, w]);
    for vi in 0..v {
        for y in 0..h {
            for x in 0..w {
                let i = p.index([vi, 0, y, x]);
                let (pi, gi) = (p.data()[i], g.data()[i]);
                let d_dp = (num - 2.0 * gi * den) / (den * den);
                let d_de = d_dp * ctx.params.k * pi * (1.0 - pi);
                grad_pixels.set([vi, arg[i], y, x], d_de);
            }
        }
    }
    let grad_z = ctx.decoder.backward(&grad_pixels);
    let (_, b) = ctx.schedule.coefficients(ctx.t)?;
    Ok((loss, grad_z.map(|x| -b * x)))
}

pub fn total_loss(v_pred: &Tensor4, ctx: &LossContext, lambda: f64) -> Result<LossReport, DiffusionError> {
    let l_mcp = mcp_loss(v_pred, ctx.v_target)?;
    let l_seg = segmentation_loss(v_pred, ctx)?;
    Ok(LossReport::new(l_mcp, l_seg, lambda))
}

pub fn total_loss_grad(v_pred: &Tensor4, ctx: &LossContext, lambda: f64) -> Result<(LossReport, Tensor4), DiffusionError> {
    let l_mcp = mcp_loss(v_pred, ctx.v_target)?;
    let (l_seg, g_seg) = segmentation_loss_grad(v_pred, ctx)?;
    let grad = mcp_grad(v_pred, ctx.v_target).axpby(1.0, &g_seg, lambda)?;
    Ok((LossReport::new(l_mcp, l_seg, lambda), grad))
}
