//! Seeded synthetic data with a controllable dependence between target and protected label.
//!
//! Each row draws its class `y ~ Bernoulli(positive_rate)` and unit-variance Gaussian
//! features centred at `±separation / 2` by class. The protected bit copies `y` with
//! probability `bias_strength` and is a fair coin otherwise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::fairness::{BinarizationRule, ProtectedLabeling};
use crate::matrix::Matrix;
use crate::nn::stream_rng;

pub const SYNTHETIC_PROTECTED: &str = "group";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub bias_strength: f64,
    pub positive_rate: f64,
    /// Distance between cluster centres, in standard deviations.
    pub separation: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            n_features: 4,
            bias_strength: 0.0,
            positive_rate: 0.5,
            separation: 2.0,
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_samples < 4 {
            return bad(format!("synthetic n_samples {} < 4", self.n_samples));
        }
        if self.n_features < 1 {
            return bad("synthetic n_features must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.bias_strength) {
            return bad(format!("bias_strength {} outside [0, 1]", self.bias_strength));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!("positive_rate {} outside (0, 1)", self.positive_rate));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be >= 0", self.separation));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0x5e7);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let half = spec.separation / 2.0;
    let mut features = Vec::with_capacity(spec.n_samples * spec.n_features);
    let mut target = Vec::with_capacity(spec.n_samples);
    let mut group = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let y = u8::from(rng.gen::<f64>() < spec.positive_rate);
        let coin = u8::from(rng.gen::<f64>() < 0.5);
        let a = if rng.gen::<f64>() < spec.bias_strength { y } else { coin };
        let centre = if y == 1 { half } else { -half };
        for _ in 0..spec.n_features {
            features.push(centre + noise.sample(&mut rng));
        }
        target.push(y);
        group.push(a);
    }
    let names = (0..spec.n_features).map(|j| format!("feature_{j}")).collect();
    let protected = ProtectedLabeling::new(SYNTHETIC_PROTECTED, group, BinarizationRule::Binary)?;
    let all = Dataset::new(
        Matrix::new(spec.n_samples, spec.n_features, features)?,
        names,
        target,
        vec![protected],
        Split::Train,
    )?;
    all.train_test_split(spec.train_fraction, spec.seed)
}
