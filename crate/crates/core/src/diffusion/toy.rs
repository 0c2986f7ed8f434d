//! Synthetic denoising task with an exactly representable solution, used to
//! compare training with and without the segmentation term.
//!
//! Each sample carries a conditioning image `cond` (a blob indicator plus
//! two noise channels) and a clean latent `z0 = M·cond` per location. Since
//! `v = (√ᾱ/√(1−ᾱ))·z_t − (1/√(1−ᾱ))·z0`, a per-timestep linear map of
//! `[z_t; cond; 1]` reproduces the velocity exactly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    total_loss_grad, DiffusionError, LatentBatch, LossContext, LossReport, NoiseSchedule, SoftMaskParams, Tensor4,
    ToyDecoder,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTaskConfig {
    pub views: usize,
    pub latent_channels: usize,
    pub cond_channels: usize,
    /// Latent height and width.
    pub size: usize,
    /// Timestep buckets; training draws the centre timestep of each bucket.
    pub buckets: usize,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        Self { views: 2, latent_channels: 4, cond_channels: 3, size: 4, buckets: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct ToyTask {
    pub config: ToyTaskConfig,
    pub decoder: ToyDecoder,
    /// `latent_channels × cond_channels`, row-major.
    pub mixing: Vec<f64>,
    pub schedule: NoiseSchedule,
}

/// One training example.
#[derive(Clone, Debug)]
pub struct ToySample {
    pub cond: Tensor4,
    pub batch: LatentBatch,
}

impl ToyTask {
    pub fn new(config: ToyTaskConfig, schedule: NoiseSchedule, rng: &mut impl Rng) -> Result<Self, DiffusionError> {
        if config.views == 0 || config.latent_channels == 0 || config.cond_channels == 0 || config.size == 0 {
            return Err(DiffusionError::InvalidParams("toy task dimensions must be positive".into()));
        }
        if config.buckets == 0 || config.buckets > schedule.steps() {
            return Err(DiffusionError::InvalidParams("bucket count must be in 1..=T".into()));
        }
        let decoder = ToyDecoder::random(config.latent_channels, rng);
        let mixing = (0..config.latent_channels * config.cond_channels).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self { config, decoder, mixing, schedule })
    }

    pub fn bucket_of(&self, t: usize) -> usize {
        (t * self.config.buckets / self.schedule.steps()).min(self.config.buckets - 1)
    }

    pub fn bucket_timestep(&self, b: usize) -> usize {
        let width = self.schedule.steps() as f64 / self.config.buckets as f64;
        ((b as f64 + 0.5) * width) as usize
    }

    fn latent_shape(&self) -> [usize; 4] {
        let c = &self.config;
        [c.views, c.latent_channels, c.size, c.size]
    }

    pub fn clean_latent(&self, cond: &Tensor4) -> Tensor4 {
        let k = self.config.cond_channels;
        Tensor4::from_fn(self.latent_shape(), |[v, c, y, x]| {
            (0..k).map(|j| self.mixing[c * k + j] * cond.get([v, j, y, x])).sum()
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<ToySample, DiffusionError> {
        let c = &self.config;
        let n = c.size;
        let mut cond = Tensor4::zeros([c.views, c.cond_channels, n, n]);
        for v in 0..c.views {
            let (x0, y0) = (rng.random_range(0..n), rng.random_range(0..n));
            let (x1, y1) = (rng.random_range(x0..n) + 1, rng.random_range(y0..n) + 1);
            for y in 0..n {
                for x in 0..n {
                    let inside = (x0..x1).contains(&x) && (y0..y1).contains(&y);
                    cond.set([v, 0, y, x], if inside { 1.0 } else { 0.0 });
                    for j in 1..c.cond_channels {
                        cond.set([v, j, y, x], 0.5 * rng.sample::<f64, _>(StandardNormal));
                    }
                }
            }
        }
        let z0 = self.clean_latent(&cond);
        let eps = Tensor4::randn(self.latent_shape(), rng);
        let t = self.bucket_timestep(rng.random_range(0..c.buckets));
        Ok(ToySample { batch: LatentBatch::new(z0, eps, t, &self.schedule)?, cond })
    }

    /// Input features `[z_t; cond; 1]` at one location.
    pub fn features(&self, sample: &ToySample, v: usize, y: usize, x: usize) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.feature_dim());
        f.extend((0..self.config.latent_channels).map(|c| sample.batch.zt.get([v, c, y, x])));
        f.extend((0..self.config.cond_channels).map(|j| sample.cond.get([v, j, y, x])));
        f.push(1.0);
        f
    }

    pub fn feature_dim(&self) -> usize {
        self.config.latent_channels + self.config.cond_channels + 1
    }

    pub fn loss_context<'a>(&'a self, sample: &'a ToySample, params: &'a SoftMaskParams) -> LossContext<'a> {
        LossContext {
            v_target: &sample.batch.v_target,
            zt: &sample.batch.zt,
            t: sample.batch.t,
            schedule: &self.schedule,
            decoder: &self.decoder,
            params,
        }
    }
}

/// Linear velocity predictor over `onehot(bucket) ⊗ [z_t; cond; 1]`, applied
/// independently at every latent location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDenoiser {
    pub buckets: usize,
    pub out_channels: usize,
    pub feature_dim: usize,
    /// `buckets × out_channels × feature_dim`, row-major.
    pub weights: Vec<f64>,
}

impl ToyDenoiser {
    pub fn zeros(task: &ToyTask) -> Self {
        let (b, c, f) = (task.config.buckets, task.config.latent_channels, task.feature_dim());
        Self { buckets: b, out_channels: c, feature_dim: f, weights: vec![0.0; b * c * f] }
    }

    fn offset(&self, bucket: usize, c: usize) -> usize {
        (bucket * self.out_channels + c) * self.feature_dim
    }

    pub fn predict(&self, task: &ToyTask, sample: &ToySample) -> Tensor4 {
        let bucket = task.bucket_of(sample.batch.t);
        let [v, c, h, w] = sample.batch.zt.shape();
        let mut out = Tensor4::zeros([v, c, h, w]);
        for vi in 0..v {
            for y in 0..h {
                for x in 0..w {
                    let f = task.features(sample, vi, y, x);
                    for ci in 0..c {
                        let o = self.offset(bucket, ci);
                        let val = self.weights[o..o + self.feature_dim].iter().zip(&f).map(|(a, b)| a * b).sum();
                        out.set([vi, ci, y, x], val);
                    }
                }
            }
        }
        out
    }

    /// Gradient with respect to the weights given a gradient on the
    /// predicted velocity.
    pub fn backward(&self, task: &ToyTask, sample: &ToySample, grad_v: &Tensor4) -> Vec<f64> {
        let bucket = task.bucket_of(sample.batch.t);
        let [v, c, h, w] = grad_v.shape();
        let mut grad = vec![0.0; self.weights.len()];
        for vi in 0..v {
            for y in 0..h {
                for x in 0..w {
                    let f = task.features(sample, vi, y, x);
                    for ci in 0..c {
                        let g = grad_v.get([vi, ci, y, x]);
                        let o = self.offset(bucket, ci);
                        for (gw, fj) in grad[o..o + self.feature_dim].iter_mut().zip(&f) {
                            *gw += g * fj;
                        }
                    }
                }
            }
        }
        grad
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub held_out: usize,
    pub seed: u64,
    pub mask: SoftMaskParams,
    pub task: ToyTaskConfig,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            learning_rate: 0.5,
            lambda: super::DEFAULT_LAMBDA,
            held_out: 32,
            seed: 0,
            mask: SoftMaskParams::default(),
            task: ToyTaskConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub l_mcp: f64,
    pub l_seg: f64,
    pub l_total: f64,
}

#[derive(Clone, Debug)]
pub struct ToyTrainResult {
    pub curve: Vec<StepRecord>,
    pub denoiser: ToyDenoiser,
    /// Mean soft Dice loss over the held-out samples.
    pub held_out_dice_loss: f64,
    /// Pooled Dice coefficient of hard masks over the held-out samples.
    pub held_out_hard_dice: f64,
    pub predicted_masks: Vec<Tensor4>,
    pub target_masks: Vec<Tensor4>,
}

fn mean_report(reports: &[LossReport], lambda: f64) -> LossReport {
    let n = reports.len().max(1) as f64;
    let l_mcp = reports.iter().map(|r| r.l_mcp).sum::<f64>() / n;
    let l_seg = reports.iter().map(|r| r.l_seg).sum::<f64>() / n;
    LossReport::new(l_mcp, l_seg, lambda)
}

/// Mean total loss over `samples` and its gradient with respect to the
/// denoiser weights.
pub fn batch_loss_grad(
    task: &ToyTask,
    model: &ToyDenoiser,
    samples: &[ToySample],
    params: &SoftMaskParams,
    lambda: f64,
) -> Result<(LossReport, Vec<f64>), DiffusionError> {
    let mut grad = vec![0.0; model.weights.len()];
    let mut reports = Vec::with_capacity(samples.len());
    let n = samples.len().max(1) as f64;
    for s in samples {
        let v = model.predict(task, s);
        let (r, g) = total_loss_grad(&v, &task.loss_context(s, params), lambda)?;
        for (a, b) in grad.iter_mut().zip(model.backward(task, s, &g)) {
            *a += b / n;
        }
        reports.push(r);
    }
    Ok((mean_report(&reports, lambda), grad))
}

/// Plain gradient descent on the total loss over a fresh batch per step.
/// The segmentation term is always reported; with `λ = 0` it does not
/// influence the weights.
pub fn toy_train(cfg: &ToyTrainConfig) -> Result<ToyTrainResult, DiffusionError> {
    cfg.mask.validate()?;
    let mut task_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let task = ToyTask::new(cfg.task.clone(), NoiseSchedule::default(), &mut task_rng)?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut held_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_4e1d_0u64);
    let held: Vec<ToySample> = (0..cfg.held_out).map(|_| task.sample(&mut held_rng)).collect::<Result<_, _>>()?;

    let mut model = ToyDenoiser::zeros(&task);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<ToySample> =
            (0..cfg.batch_size).map(|_| task.sample(&mut data_rng)).collect::<Result<_, _>>()?;
        let (r, g) = batch_loss_grad(&task, &model, &batch, &cfg.mask, cfg.lambda)?;
        if !r.l_total.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(DiffusionError::DivergenceDetected { step });
        }
        for (w, gi) in model.weights.iter_mut().zip(&g) {
            *w -= cfg.learning_rate * gi;
        }
        curve.push(StepRecord { step, l_mcp: r.l_mcp, l_seg: r.l_seg, l_total: r.l_total });
    }

    let mut dice_sum = 0.0;
    let (mut inter, mut total) = (0.0, 0.0);
    let mut predicted_masks = Vec::new();
    let mut target_masks = Vec::new();
    for s in &held {
        let v = model.predict(&task, s);
        let ctx = task.loss_context(s, &cfg.mask);
        dice_sum += super::segmentation_loss(&v, &ctx)?;
        let tau = cfg.mask.tau;
        let pred = task.decoder.hard_emission_mask(&super::recover_clean(&s.batch.zt, &v, s.batch.t, &task.schedule)?, tau)?;
        let target = task.decoder.hard_emission_mask(&s.batch.z0, tau)?;
        inter += pred.data().iter().zip(target.data()).map(|(a, b)| a * b).sum::<f64>();
        total += pred.data().iter().sum::<f64>() + target.data().iter().sum::<f64>();
        predicted_masks.push(pred);
        target_masks.push(target);
    }
    let held_out_dice_loss = dice_sum / held.len().max(1) as f64;
    if !held_out_dice_loss.is_finite() {
        return Err(DiffusionError::DivergenceDetected { step: cfg.steps });
    }
    Ok(ToyTrainResult {
        curve,
        denoiser: model,
        held_out_dice_loss,
        held_out_hard_dice: if total > 0.0 { 2.0 * inter / total } else { 1.0 },
        predicted_masks,
        target_masks,
    })
}

/// Writes paired training curves as CSV: `step,lambda,l_mcp,l_seg,l_total`.
pub fn write_curves_csv(mut out: impl Write, runs: &[(f64, &ToyTrainResult)]) -> std::io::Result<()> {
    writeln!(out, "step,lambda,l_mcp,l_seg,l_total")?;
    for (lambda, run) in runs {
        for r in &run.curve {
            writeln!(out, "{},{},{:.12e},{:.12e},{:.12e}", r.step, lambda, r.l_mcp, r.l_seg, r.l_total)?;
        }
    }
    Ok(())
}
