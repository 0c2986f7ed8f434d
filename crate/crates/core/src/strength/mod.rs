//! Emission-strength head: image features from a pluggable provider feed a
//! small MLP trained on renderer strength labels.

mod features;
mod head;

pub use features::{FeatureProvider, StatFeatures, HALO_RING, STAT_THRESHOLDS};
pub use head::{train_head_on_features, DenseLayer, HeadTrainConfig, MlpHead};

use thiserror::Error;

use crate::asset::TextureMap;

#[derive(Debug, Error)]
pub enum StrengthError {
    #[error("no training samples")]
    EmptyInput,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {0} outside the configured strength range")]
    LabelOutOfRange(f64),
    #[error("training diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid head: {0}")]
    InvalidHead(String),
    #[error("head json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Extracts features from each image and trains a head on them.
pub fn train_head<'a>(
    samples: impl IntoIterator<Item = (&'a TextureMap, f64)>,
    provider: &dyn FeatureProvider,
    cfg: &HeadTrainConfig,
) -> Result<MlpHead, StrengthError> {
    let (features, labels): (Vec<Vec<f64>>, Vec<f64>) =
        samples.into_iter().map(|(img, y)| (provider.extract(img), y)).unzip();
    train_head_on_features(provider.name(), &features, &labels, cfg)
}

pub fn predict_strength(image: &TextureMap, provider: &dyn FeatureProvider, head: &MlpHead) -> Result<f64, StrengthError> {
    let f = provider.extract(image);
    if f.len() != head.input_dim() {
        return Err(StrengthError::DimensionMismatch { expected: head.input_dim(), got: f.len() });
    }
    Ok(head.predict(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn black_image_prediction_is_in_range() {
        let feats: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64; 8]).collect();
        let labels: Vec<f64> = (0..10).map(|i| 1.0 + 0.2 * i as f64).collect();
        let cfg = HeadTrainConfig { epochs: 50, ..Default::default() };
        let head = train_head_on_features("stat8", &feats, &labels, &cfg).unwrap();
        let black = TextureMap::filled(16, 16, &[0.0; 3]);
        let p = predict_strength(&black, &StatFeatures, &head).unwrap();
        assert_eq!(p, head.predict(&[0.0; 8]));
        assert!((1.0..=3.0).contains(&p));
        assert_eq!(p, predict_strength(&black, &StatFeatures, &head).unwrap());
    }

    #[test]
    fn loss_is_non_increasing_on_linear_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let labels: Vec<f64> = (0..60).map(|_| rng.random_range(1.0..3.0)).collect();
        let feats: Vec<Vec<f64>> =
            labels.iter().map(|&y| (0..4).map(|k| (k as f64 + 1.0) * y + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let mut prev = f64::INFINITY;
        for epochs in [10, 50, 200, 800] {
            let cfg = HeadTrainConfig { epochs, validation_fraction: 0.0, ..Default::default() };
            let mse = train_head_on_features("t", &feats, &labels, &cfg).unwrap().train_mse.unwrap();
            assert!(mse <= prev, "{mse} > {prev}");
            prev = mse;
        }
    }
}
