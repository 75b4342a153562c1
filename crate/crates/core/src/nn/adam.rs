use serde::{Deserialize, Serialize};

use super::layer::{DenseLayer, LayerGradient};
use super::network::Gradients;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Gradients,
    second_moment: Gradients,
}

impl AdamState {
    pub fn new<'a>(layers: impl IntoIterator<Item = &'a DenseLayer>, config: AdamConfig) -> Self {
        let zeros: Vec<LayerGradient> = layers.into_iter().map(LayerGradient::zeros_like).collect();
        Self {
            config,
            step_count: 0,
            first_moment: Gradients {
                layers: zeros.clone(),
            },
            second_moment: Gradients { layers: zeros },
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second_moment
    }

    /// Applies one update to `layers` in place. A non-finite gradient leaves both the
    /// parameters and the optimizer state untouched.
    pub fn step<'a>(
        &mut self,
        layers: impl IntoIterator<Item = &'a mut DenseLayer>,
        grads: &[LayerGradient],
    ) -> Result<()> {
        let mut layers: Vec<&mut DenseLayer> = layers.into_iter().collect();
        if layers.len() != grads.len()
            || layers.len() != self.first_moment.layers.len()
            || !layers
                .iter()
                .zip(grads)
                .zip(&self.first_moment.layers)
                .all(|((l, g), m)| g.matches(l) && m.matches(l))
        {
            return Err(Error::Shape("adam: parameter/gradient shapes differ".into()));
        }
        if !grads.iter().flat_map(LayerGradient::values).all(f64::is_finite) {
            return Err(Error::Numeric("adam: non-finite gradient".into()));
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (((layer, g), m), v) in layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment.layers)
            .zip(&mut self.second_moment.layers)
        {
            let (w, b) = layer.params_mut();
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let m_hat = m[i] / correction1;
                    let v_hat = v[i] / correction2;
                    p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            };
            update(w, &g.weights, &mut m.weights, &mut v.weights);
            update(b, &g.biases, &mut m.biases, &mut v.biases);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    fn layer() -> DenseLayer {
        DenseLayer::new(2, 2, vec![0.5, -0.25, 1.0, 2.0], vec![0.1, -0.1], Activation::Relu).unwrap()
    }

    fn filled(layer: &DenseLayer, v: f64) -> Gradients {
        let mut g = Gradients::zeros_like(std::slice::from_ref(layer));
        g.layers[0].weights.iter_mut().for_each(|x| *x = v);
        g.layers[0].biases.iter_mut().for_each(|x| *x = v);
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut l = layer();
        let before = l.clone();
        let mut adam = AdamState::new([&l], AdamConfig::default());
        adam.step([&mut l], &filled(&before, 1.0).layers).unwrap();
        let after_one = l.clone();
        let m1 = adam.first_moment().layers[0].weights[0];
        adam.step([&mut l], &filled(&before, 0.0).layers).unwrap();
        assert_eq!(adam.first_moment().layers[0].weights[0], 0.9 * m1);
        assert_eq!(adam.step_count(), 2);
        // the first step moved parameters; the zero-gradient step still applies momentum
        assert_ne!(after_one, before);

        let mut fresh = layer();
        let mut adam = AdamState::new([&fresh], AdamConfig::default());
        adam.step([&mut fresh], &filled(&before, 0.0).layers).unwrap();
        assert_eq!(fresh, before);
    }

    #[test]
    fn first_unit_step_moves_by_learning_rate() {
        let mut l = layer();
        let before = l.clone();
        let mut adam = AdamState::new([&l], AdamConfig::default());
        adam.step([&mut l], &filled(&before, 1.0).layers).unwrap();
        for (a, b) in l.weights().iter().zip(before.weights()) {
            assert!((b - a - 0.001).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut l = layer();
        let before = l.clone();
        let mut adam = AdamState::new([&l], AdamConfig::default());
        let state = adam.clone();
        let mut g = filled(&before, 1.0);
        g.layers[0].biases[1] = f64::NAN;
        assert!(matches!(adam.step([&mut l], &g.layers), Err(Error::Numeric(_))));
        assert_eq!(l, before);
        assert_eq!(adam, state);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut l = layer();
            let g = filled(&l.clone(), 0.3);
            let mut adam = AdamState::new([&l], AdamConfig::default());
            adam.step([&mut l], &g.layers).unwrap();
            adam.step([&mut l], &g.layers).unwrap();
            l
        };
        let (a, b) = (run(), run());
        assert!(a.weights().iter().zip(b.weights()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
