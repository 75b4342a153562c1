use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clamp applied inside every loss to keep `log` finite.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BinaryCrossEntropy,
    /// `-alpha_t * (1 - p_t)^gamma * ln(p_t)`, with `alpha` weighting the positive class only.
    Focal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default)]
    pub sample_weights: Option<Vec<f64>>,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::bce()
    }
}

impl LossSpec {
    pub fn bce() -> Self {
        Self {
            kind: LossKind::BinaryCrossEntropy,
            gamma: 0.0,
            alpha: 1.0,
            sample_weights: None,
        }
    }

    pub fn focal(gamma: f64, alpha: f64) -> Self {
        Self {
            kind: LossKind::Focal,
            gamma,
            alpha,
            sample_weights: None,
        }
    }

    pub fn with_sample_weights(mut self, weights: Vec<f64>) -> Self {
        self.sample_weights = Some(weights);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("focal alpha must be > 0, got {}", self.alpha)));
        }
        if let Some(w) = &self.sample_weights {
            if let Some(bad) = w.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("sample weight {bad} is not a nonnegative real")));
            }
        }
        Ok(())
    }

    /// Unweighted loss of one prediction.
    pub fn pointwise(&self, prediction: f64, target: f64) -> f64 {
        let p = prediction.clamp(PROB_EPS, 1.0 - PROB_EPS);
        match self.kind {
            LossKind::BinaryCrossEntropy => -(target * p.ln() + (1.0 - target) * (1.0 - p).ln()),
            LossKind::Focal => {
                let pos = self.alpha * (1.0 - p).powf(self.gamma) * p.ln();
                let neg = p.powf(self.gamma) * (1.0 - p).ln();
                -(target * pos + (1.0 - target) * neg)
            }
        }
    }

    /// Derivative of [`LossSpec::pointwise`] with respect to the prediction.
    ///
    /// Zero where the clamp is active.
    pub fn derivative(&self, prediction: f64, target: f64) -> f64 {
        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&prediction) {
            return 0.0;
        }
        let p = prediction;
        match self.kind {
            LossKind::BinaryCrossEntropy => -target / p + (1.0 - target) / (1.0 - p),
            LossKind::Focal => {
                let g = self.gamma;
                // d/dp of -(1-p)^g ln p
                let pos = if g == 0.0 {
                    -1.0 / p
                } else {
                    g * (1.0 - p).powf(g - 1.0) * p.ln() - (1.0 - p).powf(g) / p
                };
                // d/dp of -p^g ln(1-p)
                let neg = if g == 0.0 {
                    1.0 / (1.0 - p)
                } else {
                    -g * p.powf(g - 1.0) * (1.0 - p).ln() + p.powf(g) / (1.0 - p)
                };
                target * self.alpha * pos + (1.0 - target) * neg
            }
        }
    }

    pub(crate) fn weight_at(&self, i: usize) -> f64 {
        self.sample_weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub(crate) fn check_batch(&self, predictions: usize, targets: &[f64]) -> Result<()> {
        if predictions != targets.len() {
            return Err(Error::Shape(format!(
                "{predictions} predictions vs {} targets",
                targets.len()
            )));
        }
        if let Some(w) = &self.sample_weights {
            if w.len() != targets.len() {
                return Err(Error::Shape(format!(
                    "{} sample weights vs {} targets",
                    w.len(),
                    targets.len()
                )));
            }
        }
        if let Some(t) = targets.iter().find(|t| **t != 0.0 && **t != 1.0) {
            return Err(Error::Contract(format!("target {t} is not binary")));
        }
        Ok(())
    }
}

/// Mean over samples of the per-sample weighted loss.
pub fn loss(spec: &LossSpec, predictions: &[f64], targets: &[f64]) -> Result<f64> {
    spec.check_batch(predictions.len(), targets)?;
    if predictions.is_empty() {
        return Err(Error::Contract("loss of an empty batch".into()));
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (&p, &y))| spec.weight_at(i) * spec.pointwise(p, y))
        .sum();
    Ok(total / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_half_is_ln2() {
        let l = loss(&LossSpec::bce(), &[0.5], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn focal_reference_value() {
        // -4 * 0.1^2 * ln(0.9)
        let expected = -4.0 * 0.01 * 0.9f64.ln();
        let l = loss(&LossSpec::focal(2.0, 4.0), &[0.9], &[1.0]).unwrap();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.0042144).abs() < 1e-7);
    }

    #[test]
    fn focal_reduces_to_bce() {
        let focal = LossSpec::focal(0.0, 1.0);
        let bce = LossSpec::bce();
        for &p in &[1e-9, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0] {
            for &y in &[0.0, 1.0] {
                assert!((focal.pointwise(p, y) - bce.pointwise(p, y)).abs() < 1e-12);
                assert!((focal.derivative(p, y) - bce.derivative(p, y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for spec in [LossSpec::bce(), LossSpec::focal(2.0, 4.0), LossSpec::focal(0.5, 0.3)] {
            for &p in &[0.05, 0.4, 0.8] {
                for &y in &[0.0, 1.0] {
                    let fd = (spec.pointwise(p + h, y) - spec.pointwise(p - h, y)) / (2.0 * h);
                    let an = spec.derivative(p, y);
                    assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{spec:?} p={p} y={y}");
                }
            }
        }
    }

    #[test]
    fn clamps_extreme_predictions() {
        let l = loss(&LossSpec::bce(), &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(l.is_finite());
        assert!((l + (PROB_EPS).ln()).abs() < 1e-9);
    }

    #[test]
    fn sample_weights_scale_terms() {
        let spec = LossSpec::bce().with_sample_weights(vec![2.0, 0.0]);
        let l = loss(&spec, &[0.5, 0.1], &[1.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(
            loss(&LossSpec::bce(), &[0.5], &[1.0, 0.0]),
            Err(Error::Shape(_))
        ));
        let spec = LossSpec::bce().with_sample_weights(vec![1.0]);
        assert!(matches!(loss(&spec, &[0.5, 0.5], &[1.0, 0.0]), Err(Error::Shape(_))));
    }
}
