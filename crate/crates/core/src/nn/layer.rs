use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a = f(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Data(format!("unknown activation tag '{other}'"))),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Affine transform followed by an element-wise activation.
///
/// Weights are row-major with shape `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} needs {} weights, got {}",
                in_dim * out_dim,
                weights.len()
            )));
        }
        if biases.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} needs {out_dim} biases, got {}",
                biases.len()
            )));
        }
        if !weights.iter().chain(&biases).all(|v| v.is_finite()) {
            return Err(Error::Numeric("layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        })
    }

    /// Builds a layer from nested rows, `weights[o][i]`.
    pub fn from_rows(weights: &[Vec<f64>], biases: Vec<f64>, activation: Activation) -> Result<Self> {
        let out_dim = weights.len();
        let in_dim = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|r| r.len() != in_dim) {
            return Err(Error::Shape("ragged weight rows".into()));
        }
        Self::new(in_dim, out_dim, weights.concat(), biases, activation)
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Self::new(in_dim, out_dim, weights, vec![0.0; out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.in_dim + inp]
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Writes `z = W x + b` and `a = f(z)` into the given buffers.
    pub(crate) fn forward_into(&self, input: &[f64], pre: &mut Vec<f64>, post: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.in_dim);
        pre.clear();
        post.clear();
        for (row, &b) in self.weights.chunks_exact(self.in_dim).zip(&self.biases) {
            let z = row.iter().zip(input).fold(b, |acc, (w, x)| acc + w * x);
            pre.push(z);
            post.push(self.activation.apply(z));
        }
    }

    /// Accumulates `scale * dz ⊗ input` into the gradient buffers and, when requested,
    /// writes `Wᵀ dz` into `input_grad`.
    pub(crate) fn accumulate_backward(
        &self,
        input: &[f64],
        dz: &[f64],
        scale: f64,
        grad: &mut LayerGradient,
        input_grad: Option<&mut Vec<f64>>,
    ) {
        for (o, &d) in dz.iter().enumerate() {
            let sd = scale * d;
            if sd != 0.0 {
                let row = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += sd * x;
                }
            }
            grad.biases[o] += sd;
        }
        if let Some(out) = input_grad {
            out.clear();
            out.resize(self.in_dim, 0.0);
            for (row, &d) in self.weights.chunks_exact(self.in_dim).zip(dz) {
                if d != 0.0 {
                    for (g, w) in out.iter_mut().zip(row) {
                        *g += w * d;
                    }
                }
            }
        }
    }
}

/// Gradient buffers shaped like one [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerGradient {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            biases: vec![0.0; layer.biases.len()],
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(&self.biases).copied()
    }

    pub(crate) fn fill_zero(&mut self) {
        self.weights.iter_mut().for_each(|v| *v = 0.0);
        self.biases.iter_mut().for_each(|v| *v = 0.0);
    }

    pub(crate) fn matches(&self, layer: &DenseLayer) -> bool {
        self.weights.len() == layer.weights.len() && self.biases.len() == layer.biases.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(DenseLayer::new(2, 1, vec![1.0], vec![0.0], Activation::Relu).is_err());
        assert!(DenseLayer::new(2, 1, vec![1.0, 2.0], vec![], Activation::Relu).is_err());
        assert!(DenseLayer::new(1, 1, vec![f64::NAN], vec![0.0], Activation::Relu).is_err());
    }
}
