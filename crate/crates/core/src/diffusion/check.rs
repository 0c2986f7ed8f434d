//! Self-check suites behind `loss-check`: clean-latent identity, analytic
//! gradients against central differences, and soft-mask convergence.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::*;

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_TOLERANCE: f64 = 1e-5;
/// Denominator floor for relative gradient errors.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub samples: usize,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientCheck {
    pub term: String,
    pub checked: usize,
    /// Coordinates whose ±h perturbation flips an emission-channel argmax.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub k: Vec<f64>,
    pub max_deviation: Vec<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossCheckReport {
    pub seed: u64,
    pub identity: IdentityCheck,
    pub gradients: Vec<GradientCheck>,
    pub soft_mask_convergence: ConvergenceCheck,
    pub passed: bool,
}

fn identity_suite(rng: &mut impl Rng, samples: usize) -> Result<IdentityCheck, DiffusionError> {
    let s = NoiseSchedule::default();
    let mut worst: f64 = 0.0;
    let per_t = samples.div_ceil(s.steps());
    for t in 0..s.steps() {
        let z0 = Tensor4::randn([1, 1, 1, per_t], rng);
        let eps = Tensor4::randn([1, 1, 1, per_t], rng);
        let b = LatentBatch::new(z0, eps, t, &s)?;
        worst = worst.max(recover_clean(&b.zt, &b.v_target, t, &s)?.max_abs_diff(&b.z0));
    }
    Ok(IdentityCheck { samples: per_t * s.steps(), max_abs_error: worst, passed: worst < 1e-12 })
}

/// Compares an analytic gradient with central differences on random
/// coordinates until `want` coordinates away from argmax switches have been
/// checked.
pub fn gradient_suite(
    term: &str,
    v_pred: &Tensor4,
    ctx: &LossContext,
    lambda: f64,
    want: usize,
    rng: &mut impl Rng,
) -> Result<GradientCheck, DiffusionError> {
    let seg_only = term == "segmentation";
    let (_, grad) = if seg_only {
        segmentation_loss_grad(v_pred, ctx)?
    } else {
        let (r, g) = total_loss_grad(v_pred, ctx, lambda)?;
        (r.l_total, g)
    };
    let eval = |v: &Tensor4| -> Result<f64, DiffusionError> {
        if seg_only {
            segmentation_loss(v, ctx)
        } else {
            Ok(total_loss(v, ctx, lambda)?.l_total)
        }
    };
    let argmax = |v: &Tensor4| -> Result<Vec<usize>, DiffusionError> {
        Ok(ctx.decoder.emission_intensity(&ctx.decode_recovered(v)?).1)
    };
    let base_arg = argmax(v_pred)?;
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    for i in sample_indices(rng, v_pred.len(), v_pred.len()).into_iter() {
        if checked == want {
            break;
        }
        let mut plus = v_pred.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = v_pred.clone();
        minus.data_mut()[i] -= FD_STEP;
        if argmax(&plus)? != base_arg || argmax(&minus)? != base_arg {
            skipped += 1;
            continue;
        }
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
        let a = grad.data()[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_REL_FLOOR));
        checked += 1;
    }
    Ok(GradientCheck {
        term: term.into(),
        checked,
        skipped,
        max_rel_error: worst,
        passed: checked >= want && worst < GRAD_TOLERANCE,
    })
}

pub fn soft_mask_deviation(values: &Tensor4, params: &SoftMaskParams) -> f64 {
    let soft = soft_mask(values, params);
    values
        .data()
        .iter()
        .zip(soft.data())
        .filter(|(x, _)| (**x - params.tau).abs() > 0.01)
        .map(|(x, m)| (m - if *x > params.tau { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

fn convergence_suite(rng: &mut impl Rng) -> ConvergenceCheck {
    let values = Tensor4::from_fn([1, 1, 32, 32], |_| rng.random_range(-0.5..0.5));
    let k = vec![10.0, 1e2, 1e3, 1e4];
    let dev: Vec<f64> = k.iter().map(|&k| soft_mask_deviation(&values, &SoftMaskParams { tau: 0.01, k })).collect();
    let monotone = dev.windows(2).all(|w| w[1] < w[0] || (w[1] == 0.0 && w[0] == 0.0));
    let passed = monotone && dev[3] < 1e-10;
    ConvergenceCheck { k, max_deviation: dev, passed }
}

/// Random problem for gradient checks: latent `2×4×6×6`, a mid-schedule
/// timestep and a prediction perturbed around the target.
pub struct GradientProblem {
    pub schedule: NoiseSchedule,
    pub decoder: ToyDecoder,
    pub zt: Tensor4,
    pub v_target: Tensor4,
    pub v_pred: Tensor4,
    pub t: usize,
    pub params: SoftMaskParams,
}

impl GradientProblem {
    pub fn random(rng: &mut impl Rng) -> Self {
        let schedule = NoiseSchedule::default();
        let decoder = ToyDecoder::random(4, rng);
        let shape = [2, 4, 6, 6];
        let z0 = Tensor4::randn(shape, rng);
        let eps = Tensor4::randn(shape, rng);
        let t = rng.random_range(100..900);
        let b = LatentBatch::new(z0, eps, t, &schedule).expect("shapes agree");
        let noise = Tensor4::randn(shape, rng);
        let v_pred = b.v_target.axpby(1.0, &noise, 0.3).expect("shapes agree");
        Self { schedule, decoder, zt: b.zt, v_target: b.v_target, v_pred, t, params: SoftMaskParams::default() }
    }

    pub fn context(&self) -> LossContext<'_> {
        LossContext {
            v_target: &self.v_target,
            zt: &self.zt,
            t: self.t,
            schedule: &self.schedule,
            decoder: &self.decoder,
            params: &self.params,
        }
    }
}

pub fn run_loss_check(seed: u64) -> Result<LossCheckReport, DiffusionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity = identity_suite(&mut rng, 10_000)?;
    let problem = GradientProblem::random(&mut rng);
    let ctx = problem.context();
    let gradients = vec![
        gradient_suite("segmentation", &problem.v_pred, &ctx, DEFAULT_LAMBDA, 100, &mut rng)?,
        gradient_suite("total", &problem.v_pred, &ctx, DEFAULT_LAMBDA, 100, &mut rng)?,
    ];
    let soft_mask_convergence = convergence_suite(&mut rng);
    let passed = identity.passed && gradients.iter().all(|g| g.passed) && soft_mask_convergence.passed;
    Ok(LossCheckReport { seed, identity, gradients, soft_mask_convergence, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for seed in [0, 1, 2] {
            let r = run_loss_check(seed).unwrap();
            assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
        }
    }
}
