use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StrengthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// Fully connected regressor `d → h₁ → h₂ → 1` with tanh between layers,
/// operating on standardized features and predicting a standardized label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub provider: String,
    pub dims: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_mean: f64,
    pub label_std: f64,
    pub strength_range: [f64; 2],
    pub train_mse: Option<f64>,
    pub validation_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub strength_range: [f64; 2],
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 2000,
            learning_rate: 0.05,
            validation_fraction: 0.2,
            seed: 0,
            strength_range: [1.0, 3.0],
        }
    }
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<(), StrengthError> {
        let [lo, hi] = self.strength_range;
        if self.hidden.iter().any(|&h| h == 0) || !(lo < hi) {
            return Err(StrengthError::InvalidConfig("hidden sizes must be positive and range increasing".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(StrengthError::InvalidConfig("learning_rate > 0 and validation_fraction in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Activations of every layer for one input, used by backpropagation.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl MlpHead {
    pub fn new(provider: &str, input_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut layers: Vec<DenseLayer> = dims.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect();
        // Zero output layer: the untrained head predicts the label mean.
        if let Some(last) = layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        Self {
            provider: provider.to_string(),
            dims,
            layers,
            feature_mean: vec![0.0; input_dim],
            feature_std: vec![1.0; input_dim],
            label_mean: 0.0,
            label_std: 1.0,
            strength_range: [1.0, 3.0],
            train_mse: None,
            validation_mse: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.feature_mean.iter().zip(&self.feature_std)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    fn trace(&self, z: &[f64]) -> Trace {
        let mut acts = vec![z.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = layer.apply(acts.last().expect("non-empty"));
            if i + 1 < self.layers.len() {
                a.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(a);
        }
        Trace { acts }
    }

    /// Network output on standardized features, in standardized label units.
    pub fn forward_standardized(&self, z: &[f64]) -> f64 {
        self.trace(z).acts.last().expect("non-empty")[0]
    }

    /// Unclamped strength for raw features.
    pub fn raw_output(&self, features: &[f64]) -> f64 {
        self.label_mean + self.label_std * self.forward_standardized(&self.standardize(features))
    }

    /// Strength clamped to the configured range.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let [lo, hi] = self.strength_range;
        let y = self.raw_output(features);
        if y.is_finite() {
            y.clamp(lo, hi)
        } else {
            lo
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }

    /// Mean squared error on standardized inputs/targets and its gradient
    /// in [`MlpHead::parameters`] order.
    pub fn loss_grad(&self, zs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let n = zs.len().max(1) as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
            self.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()])).collect();
        let mut loss = 0.0;
        for (z, &y) in zs.iter().zip(ys) {
            let tr = self.trace(z);
            let out = tr.acts.last().expect("non-empty")[0];
            loss += (out - y) * (out - y) / n;
            let mut delta = vec![2.0 * (out - y) / n];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &tr.acts[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..layer.outputs {
                    gb[o] += delta[o];
                    for i in 0..layer.inputs {
                        gw[o * layer.inputs + i] += delta[o] * input[i];
                    }
                }
                if li > 0 {
                    // Input of this layer is tanh output a; d tanh = 1 − a².
                    delta = (0..layer.inputs)
                        .map(|i| {
                            let s: f64 = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum();
                            s * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect();
        (loss, flat)
    }

    pub fn to_json(&self) -> Result<String, StrengthError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, StrengthError> {
        let head: MlpHead = serde_json::from_str(text)?;
        head.check()?;
        Ok(head)
    }

    fn check(&self) -> Result<(), StrengthError> {
        let bad = |m: &str| Err(StrengthError::InvalidHead(m.to_string()));
        if self.dims.len() != self.layers.len() + 1 || self.dims.last() != Some(&1) {
            return bad("dims must list every layer width and end in 1");
        }
        for (l, w) in self.layers.iter().zip(self.dims.windows(2)) {
            if l.inputs != w[0] || l.outputs != w[1] || l.weights.len() != w[0] * w[1] || l.bias.len() != w[1] {
                return bad("layer shape disagrees with dims");
            }
        }
        if self.feature_mean.len() != self.dims[0] || self.feature_std.len() != self.dims[0] {
            return bad("standardization vectors must match the input dimension");
        }
        Ok(())
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let m = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    let s = var.sqrt();
    (m, if s > 1e-12 { s } else { 1.0 })
}

/// Full-batch gradient descent on the mean squared error of standardized
/// labels. A `validation_fraction` of the samples (shuffled with the seed)
/// is held out and its MSE recorded.
pub fn train_head_on_features(
    provider: &str,
    features: &[Vec<f64>],
    labels: &[f64],
    cfg: &HeadTrainConfig,
) -> Result<MlpHead, StrengthError> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(StrengthError::EmptyInput);
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(StrengthError::DimensionMismatch { expected: d, got: features.iter().map(|f| f.len()).max().unwrap_or(0) });
    }
    let [lo, hi] = cfg.strength_range;
    if let Some(&bad) = labels.iter().find(|&&y| !(lo..=hi).contains(&y)) {
        return Err(StrengthError::LabelOutOfRange(bad));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if labels.len() >= 5 { (cfg.validation_fraction * labels.len() as f64).floor() as usize } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);

    let mut head = MlpHead::new(provider, d, &cfg.hidden, &mut rng);
    head.strength_range = cfg.strength_range;
    for j in 0..d {
        let (m, s) = mean_std(train_idx.iter().map(|&i| features[i][j]));
        head.feature_mean[j] = m;
        head.feature_std[j] = s;
    }
    let (lm, ls) = mean_std(train_idx.iter().map(|&i| labels[i]));
    head.label_mean = lm;
    head.label_std = ls;

    let zs: Vec<Vec<f64>> = train_idx.iter().map(|&i| head.standardize(&features[i])).collect();
    let ys: Vec<f64> = train_idx.iter().map(|&i| (labels[i] - lm) / ls).collect();
    let mut params = head.parameters();
    for epoch in 0..cfg.epochs {
        let (loss, g) = head.loss_grad(&zs, &ys);
        if !loss.is_finite() {
            return Err(StrengthError::DivergenceDetected { epoch });
        }
        for (p, gi) in params.iter_mut().zip(&g) {
            *p -= cfg.learning_rate * gi;
        }
        head.set_parameters(&params);
    }
    let mse = |idx: &[usize]| {
        idx.iter().map(|&i| (head.raw_output(&features[i]) - labels[i]).powi(2)).sum::<f64>() / idx.len() as f64
    };
    let train_mse = mse(train_idx);
    if !train_mse.is_finite() {
        return Err(StrengthError::DivergenceDetected { epoch: cfg.epochs });
    }
    let validation_mse = (!val_idx.is_empty()).then(|| mse(val_idx));
    Ok(MlpHead { train_mse: Some(train_mse), validation_mse, ..head })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = MlpHead::new("t", 3, &[5, 4], &mut rng);
        let zs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let ys: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let (_, g) = head.loss_grad(&zs, &ys);
        let p = head.parameters();
        let h = 1e-5;
        for k in 0..p.len() {
            let mut a = head.clone();
            let mut q = p.clone();
            q[k] += h;
            a.set_parameters(&q);
            let lp = a.loss_grad(&zs, &ys).0;
            q[k] -= 2.0 * h;
            a.set_parameters(&q);
            let lm = a.loss_grad(&zs, &ys).0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6);
            assert!(rel < 1e-5, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn constant_labels() {
        let feats: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let head = train_head_on_features("t", &feats, &[2.25; 20], &HeadTrainConfig::default()).unwrap();
        assert!(head.train_mse.unwrap() < 1e-10, "{:?}", head.train_mse);
        for f in &feats {
            assert!((head.predict(f) - 2.25).abs() < 1e-6);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = MlpHead::new("stat8", 8, &[64, 32], &mut rng);
        assert_eq!(head.dims, vec![8, 64, 32, 1]);
        let back = MlpHead::from_json(&head.to_json().unwrap()).unwrap();
        assert_eq!(back.parameters(), head.parameters());
        let mut broken = head.clone();
        broken.dims[1] = 63;
        assert!(MlpHead::from_json(&serde_json::to_string(&broken).unwrap()).is_err());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let feats = vec![vec![0.0]; 3];
        assert!(matches!(
            train_head_on_features("t", &feats, &[1.0, 2.0, 3.5], &HeadTrainConfig::default()),
            Err(StrengthError::LabelOutOfRange(_))
        ));
    }
}
