use serde::{Deserialize, Serialize};

use super::{DiffusionError, Tensor4};

pub const DEFAULT_TIMESTEPS: usize = 1000;
pub const DEFAULT_BETA_RANGE: (f64, f64) = (1e-4, 0.02);

/// Cumulative signal fractions `ᾱ_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_TIMESTEPS, DEFAULT_BETA_RANGE.0, DEFAULT_BETA_RANGE.1)
    }
}

impl NoiseSchedule {
    /// `β` linear from `beta_start` to `beta_end` over `steps` steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        let mut acc = 1.0;
        let alpha_bar = (0..steps)
            .map(|i| {
                let frac = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
                acc *= 1.0 - (beta_start + frac * (beta_end - beta_start));
                acc
            })
            .collect();
        Self { alpha_bar }
    }

    /// Custom schedule. Values must lie in `[0, 1]`, start above 0.99 and
    /// strictly decrease; a terminal 0 is accepted so tests can reach the
    /// pure-noise endpoint.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self, DiffusionError> {
        let bad = |m: &str| Err(DiffusionError::InvalidSchedule(m.into()));
        match alpha_bar.first() {
            None => return bad("empty schedule"),
            Some(&a) if !(a > 0.99 && a <= 1.0) => return bad("alpha_bar[0] must be in (0.99, 1]"),
            _ => {}
        }
        if alpha_bar.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha_bar values must lie in [0, 1]");
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return bad("alpha_bar must be strictly decreasing");
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `(√ᾱ_t, √(1−ᾱ_t))`.
    pub fn coefficients(&self, t: usize) -> Result<(f64, f64), DiffusionError> {
        let a = *self
            .alpha_bar
            .get(t)
            .ok_or(DiffusionError::TimestepOutOfRange { t, steps: self.alpha_bar.len() })?;
        Ok((a.sqrt(), (1.0 - a).sqrt()))
    }
}

pub fn forward_diffuse(z0: &Tensor4, eps: &Tensor4, t: usize, schedule: &NoiseSchedule) -> Result<Tensor4, DiffusionError> {
    let (a, b) = schedule.coefficients(t)?;
    z0.axpby(a, eps, b)
}

pub fn velocity_target(z0: &Tensor4, eps: &Tensor4, t: usize, schedule: &NoiseSchedule) -> Result<Tensor4, DiffusionError> {
    let (a, b) = schedule.coefficients(t)?;
    eps.axpby(a, z0, -b)
}

/// `ẑ₀ = √ᾱ_t z_t − √(1−ᾱ_t) v`.
pub fn recover_clean(zt: &Tensor4, v: &Tensor4, t: usize, schedule: &NoiseSchedule) -> Result<Tensor4, DiffusionError> {
    let (a, b) = schedule.coefficients(t)?;
    zt.axpby(a, v, -b)
}

/// A clean latent, its noise, and the derived noisy latent and velocity.
#[derive(Clone, Debug)]
pub struct LatentBatch {
    pub z0: Tensor4,
    pub eps: Tensor4,
    pub t: usize,
    pub zt: Tensor4,
    pub v_target: Tensor4,
}

impl LatentBatch {
    pub fn new(z0: Tensor4, eps: Tensor4, t: usize, schedule: &NoiseSchedule) -> Result<Self, DiffusionError> {
        let zt = forward_diffuse(&z0, &eps, t, schedule)?;
        let v_target = velocity_target(&z0, &eps, t, schedule)?;
        Ok(Self { z0, eps, t, zt, v_target })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor4 {
        Tensor4::from_vec([1, 1, 1, 1], vec![v]).unwrap()
    }

    #[test]
    fn default_schedule_shape() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 1000);
        assert!((s.alpha_bar()[0] - (1.0 - 1e-4)).abs() < 1e-15);
        assert!(s.alpha_bar().windows(2).all(|w| w[1] < w[0]));
        assert!(NoiseSchedule::from_alpha_bar(s.alpha_bar().to_vec()).is_ok());
    }

    #[test]
    fn schedule_validation() {
        assert!(NoiseSchedule::from_alpha_bar(vec![]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![0.9, 0.5]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0, 0.5, 0.5]).is_err());
        assert!(NoiseSchedule::from_alpha_bar(vec![1.0, 0.25, 0.0]).is_ok());
    }

    #[test]
    fn hand_values() {
        let s = NoiseSchedule::from_alpha_bar(vec![1.0, 0.25, 0.0]).unwrap();
        let zt = forward_diffuse(&scalar(2.0), &scalar(4.0), 1, &s).unwrap();
        assert!((zt.data()[0] - (1.0 + 0.75f64.sqrt() * 4.0)).abs() < 1e-15);
        assert!((zt.data()[0] - 4.4641).abs() < 1e-4);
        assert_eq!(forward_diffuse(&scalar(2.0), &scalar(4.0), 0, &s).unwrap(), scalar(2.0));
        assert_eq!(velocity_target(&scalar(2.0), &scalar(4.0), 0, &s).unwrap(), scalar(4.0));
        assert_eq!(velocity_target(&scalar(2.0), &scalar(4.0), 2, &s).unwrap(), scalar(-2.0));
        assert_eq!(recover_clean(&scalar(3.0), &scalar(0.0), 0, &s).unwrap(), scalar(3.0));
    }

    #[test]
    fn errors() {
        let s = NoiseSchedule::default();
        let a = Tensor4::zeros([1, 2, 2, 2]);
        let b = Tensor4::zeros([1, 2, 2, 3]);
        assert!(matches!(forward_diffuse(&a, &b, 0, &s), Err(DiffusionError::ShapeMismatch(_))));
        assert!(matches!(
            velocity_target(&a, &a, 1000, &s),
            Err(DiffusionError::TimestepOutOfRange { t: 1000, steps: 1000 })
        ));
    }
}
