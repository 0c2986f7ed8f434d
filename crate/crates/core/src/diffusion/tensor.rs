use rand::Rng;
use rand_distr::StandardNormal;

use super::DiffusionError;

/// Dense float64 tensor laid out as `views × channels × height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self, DiffusionError> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(DiffusionError::ShapeMismatch(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for v in 0..shape[0] {
            for c in 0..shape[1] {
                for y in 0..shape[2] {
                    for x in 0..shape[3] {
                        let i = t.index([v, c, y, x]);
                        t.data[i] = f([v, c, y, x]);
                    }
                }
            }
        }
        t
    }

    /// Standard normal entries.
    pub fn randn(shape: [usize; 4], rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        Self { shape, data: (0..n).map(|_| rng.sample(StandardNormal)).collect() }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn index(&self, [v, c, y, x]: [usize; 4]) -> usize {
        ((v * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn get(&self, at: [usize; 4]) -> f64 {
        self.data[self.index(at)]
    }

    pub fn set(&mut self, at: [usize; 4], value: f64) {
        let i = self.index(at);
        self.data[i] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn check_same_shape(&self, other: &Tensor4) -> Result<(), DiffusionError> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(DiffusionError::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)))
        }
    }

    /// `a·self + b·other`, elementwise.
    pub fn axpby(&self, a: f64, other: &Tensor4, b: f64) -> Result<Self, DiffusionError> {
        self.check_same_shape(other)?;
        Ok(Self { shape: self.shape, data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect() })
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}
