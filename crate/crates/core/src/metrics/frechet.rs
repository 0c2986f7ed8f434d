use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::MetricError;

/// Diagonal loading added to both covariances before the square root.
pub const FRECHET_REGULARIZATION: f64 = 1e-6;
const EIGEN_MAX_ITER: usize = 10_000;

/// Mean and covariance of a feature set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
}

impl GaussianFit {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self, MetricError> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(MetricError::DimensionMismatch { a: d * d, b: covariance.len() });
        }
        let fit = Self { mean, covariance };
        let c = fit.matrix();
        let scale = c.amax().max(1.0);
        if (&c - c.transpose()).amax() > 1e-12 * scale {
            return Err(MetricError::NotPositiveSemidefinite("covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::try_new(c, f64::EPSILON, EIGEN_MAX_ITER).ok_or(MetricError::NonConvergedSqrt)?;
        if eig.eigenvalues.iter().any(|&l| l < -1e-8 * scale) {
            return Err(MetricError::NotPositiveSemidefinite("covariance has a negative eigenvalue".into()));
        }
        Ok(fit)
    }

    /// Sample mean and unbiased covariance (zero for a single sample).
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self, MetricError> {
        let n = samples.len();
        if n == 0 {
            return Err(MetricError::EmptyInput);
        }
        let d = samples[0].len();
        if let Some(s) = samples.iter().find(|s| s.len() != d) {
            return Err(MetricError::DimensionMismatch { a: d, b: s.len() });
        }
        let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
        let mut cov = vec![0.0; d * d];
        if n > 1 {
            for i in 0..d {
                for j in i..d {
                    let c = samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
                    cov[i * d + j] = c;
                    cov[j * d + i] = c;
                }
            }
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.covariance)
    }
}

fn sym_sqrt(m: DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_ITER).ok_or(MetricError::NonConvergedSqrt)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

pub fn frechet_distance(a: &GaussianFit, b: &GaussianFit) -> Result<f64, MetricError> {
    frechet_distance_with(a, b, FRECHET_REGULARIZATION)
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})` with both covariances
/// loaded by `reg·I`. The trace of the product root is taken from the
/// symmetric matrix `Σa^{1/2} Σb Σa^{1/2}`, which has the same spectrum.
pub fn frechet_distance_with(a: &GaussianFit, b: &GaussianFit, reg: f64) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch { a: a.dim(), b: b.dim() });
    }
    let d = a.dim();
    let eye = DMatrix::<f64>::identity(d, d) * reg;
    let sa = a.matrix() + &eye;
    let sb = b.matrix() + &eye;
    let ra = sym_sqrt(sa.clone())?;
    let m = &ra * &sb * &ra;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_ITER).ok_or(MetricError::NonConvergedSqrt)?;
    let tr_root: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let dmu = DVector::from_column_slice(&a.mean) - DVector::from_column_slice(&b.mean);
    let value = dmu.norm_squared() + sa.trace() + sb.trace() - 2.0 * tr_root;
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit1(mu: f64, var: f64) -> GaussianFit {
        GaussianFit::new(vec![mu], vec![var]).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        let (a, b) = (fit1(0.3, 2.0), fit1(-1.2, 0.5));
        let expect = (0.3f64 + 1.2).powi(2) + (2f64.sqrt() - 0.5f64.sqrt()).powi(2);
        assert!((frechet_distance_with(&a, &b, 0.0).unwrap() - expect).abs() < 1e-12);
        let r = FRECHET_REGULARIZATION;
        let expect_reg = (0.3f64 + 1.2).powi(2) + ((2.0 + r).sqrt() - (0.5 + r).sqrt()).powi(2);
        assert!((frechet_distance(&a, &b).unwrap() - expect_reg).abs() < 1e-12);
    }

    #[test]
    fn identical_fits_and_symmetry() {
        let s: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i % 7) as f64, (i as f64).sin()]).collect();
        let a = GaussianFit::from_samples(&s).unwrap();
        assert!(frechet_distance(&a, &a).unwrap() < 1e-8);
        let b = GaussianFit::from_samples(&s[3..]).unwrap();
        let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
        assert!(ab > 0.0 && (ab - ba).abs() < 1e-9 * ab.max(1.0));
    }

    #[test]
    fn validation() {
        assert!(GaussianFit::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(GaussianFit::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(frechet_distance(&fit1(0.0, 1.0), &GaussianFit::new(vec![0.0; 2], vec![0.0; 4]).unwrap()).is_err());
    }
}
