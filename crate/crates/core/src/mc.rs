//! Monte-Carlo dropout inference.
//!
//! For each sample, `T` forward passes are taken, pass `i` using dropout mask `d_i` drawn
//! from `(seed, i)`. The predictive posterior mean is `p = (1/T) Σ f(x; d_i)` and the
//! uncertainty is the population variance `c = (1/T) Σ (f(x; d_i) - p)^2`, both over
//! sigmoid outputs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{ForwardCache, NetworkParams};

pub const DEFAULT_SUMMARY_PASSES: usize = 30;
pub const DEFAULT_REPORT_PASSES: usize = 100;

/// Mean and population variance of one sample's pass outputs.
///
/// Values are summed in sorted order relative to the smallest, so the result does not
/// depend on pass order and identical outputs give exactly zero variance.
pub fn posterior_stats(outputs: &[f64]) -> (f64, f64) {
    let mut sorted = outputs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = sorted.len() as f64;
    let base = sorted[0];
    let mean = base + sorted.iter().map(|v| v - base).sum::<f64>() / t;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEnsembleResult {
    /// `N x T` pass outputs.
    pub outputs: Matrix,
    pub posterior_mean: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub passes: usize,
}

impl McEnsembleResult {
    pub fn from_outputs(outputs: Matrix) -> Result<Self> {
        if outputs.cols() == 0 {
            return Err(Error::Contract("Monte-Carlo ensemble needs T >= 1".into()));
        }
        let (posterior_mean, uncertainty) = outputs.iter_rows().map(posterior_stats).unzip();
        Ok(Self {
            passes: outputs.cols(),
            outputs,
            posterior_mean,
            uncertainty,
        })
    }

    pub fn len(&self) -> usize {
        self.posterior_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posterior_mean.is_empty()
    }

    pub fn summary(&self) -> UncertaintySummary {
        uncertainty_summary(self)
    }

    /// `sample_id,p,c` rows, plus one column per pass when `verbose`.
    pub fn write_csv(&self, path: &Path, verbose: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sample_id".to_string(), "p".into(), "c".into()];
        if verbose {
            header.extend((0..self.passes).map(|i| format!("pass_{i}")));
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![
                i.to_string(),
                self.posterior_mean[i].to_string(),
                self.uncertainty[i].to_string(),
            ];
            if verbose {
                rec.extend(self.outputs.row(i).iter().map(f64::to_string));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs `passes` dropout passes of `params` over every row of `inputs`.
///
/// Passes run in parallel; results are gathered by pass index, so output is independent of
/// scheduling.
pub fn mc_predict(params: &NetworkParams, inputs: &Matrix, passes: usize, seed: u64) -> Result<McEnsembleResult> {
    if passes == 0 {
        return Err(Error::Contract("Monte-Carlo ensemble needs T >= 1".into()));
    }
    if params.output_dim() != 1 {
        return Err(Error::Shape("Monte-Carlo inference needs a scalar-output network".into()));
    }
    let columns: Vec<Vec<f64>> = (0..passes)
        .into_par_iter()
        .map(|pass| {
            let mask = params
                .dropout()
                .mask_for_pass(params.layers(), seed, pass as u64);
            let mut cache = ForwardCache::default();
            inputs
                .iter_rows()
                .map(|row| {
                    params.forward_into(row, Some(&mask), &mut cache)?;
                    Ok(cache.output()[0])
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    McEnsembleResult::from_outputs(transpose(&columns, inputs.rows()))
}

/// Pass-major columns to an `N x T` matrix.
pub(crate) fn transpose(columns: &[Vec<f64>], rows: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, columns.len());
    for (t, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m.row_mut(i)[t] = *v;
        }
    }
    m
}

pub const HISTOGRAM_BINS: usize = 10;
/// Variance of a quantity bounded in [0, 1] never exceeds 1/4.
pub const HISTOGRAM_MAX: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub mean: f64,
    pub max: f64,
    /// Equal-width bins over `[0, HISTOGRAM_MAX]`; larger values land in the last bin.
    pub histogram: Vec<u64>,
    pub passes: usize,
}

pub fn uncertainty_summary(result: &McEnsembleResult) -> UncertaintySummary {
    let c = &result.uncertainty;
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for &v in c {
        let bin = ((v / HISTOGRAM_MAX) * HISTOGRAM_BINS as f64).floor() as usize;
        histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let mean = if c.is_empty() {
        0.0
    } else {
        c.iter().sum::<f64>() / c.len() as f64
    };
    UncertaintySummary {
        mean,
        max: c.iter().copied().fold(0.0, f64::max),
        histogram,
        passes: result.passes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DropoutSpec};
    use proptest::prelude::*;

    fn dropout_net(rate: f64) -> NetworkParams {
        let d = DropoutSpec::new(rate, vec![0], 1).unwrap();
        NetworkParams::mlp(3, &[12], Some((1, Activation::Sigmoid)), d, 2).unwrap()
    }

    fn inputs() -> Matrix {
        Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 2.0, 0.5], vec![3.0, -2.0, 1.0]]).unwrap()
    }

    #[test]
    fn hand_fixture() {
        let (p, c) = posterior_stats(&[0.2, 0.4, 0.6]);
        assert!((p - 0.4).abs() < 1e-12);
        assert!((c - 0.08 / 3.0).abs() < 1e-12);
        assert!((c - 0.026_666_7).abs() < 1e-7);
    }

    #[test]
    fn zero_rate_has_zero_uncertainty() {
        let r = mc_predict(&dropout_net(0.0), &inputs(), 25, 4).unwrap();
        assert!(r.uncertainty.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_pass() {
        let net = dropout_net(0.5);
        let r = mc_predict(&net, &inputs(), 1, 9).unwrap();
        assert!(r.uncertainty.iter().all(|&c| c == 0.0));
        for i in 0..r.len() {
            assert_eq!(r.posterior_mean[i], r.outputs.row(i)[0]);
        }
    }

    #[test]
    fn zero_passes_is_contract_error() {
        assert!(matches!(
            mc_predict(&dropout_net(0.5), &inputs(), 0, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dropout_produces_spread_and_is_reproducible() {
        let net = dropout_net(0.5);
        let a = mc_predict(&net, &inputs(), 40, 3).unwrap();
        let b = mc_predict(&net, &inputs(), 40, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.uncertainty.iter().any(|&c| c > 0.0));
    }

    #[test]
    fn summary_arithmetic() {
        let outputs = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.4]]).unwrap();
        let r = McEnsembleResult::from_outputs(outputs).unwrap();
        let s = uncertainty_summary(&r);
        assert_eq!((s.mean, s.max), (0.0, 0.0));
        let mut r2 = r.clone();
        r2.uncertainty = vec![0.01, 0.03];
        let s = uncertainty_summary(&r2);
        assert!((s.mean - 0.02).abs() < 1e-15);
        assert_eq!(s.max, 0.03);
        assert_eq!(s.histogram.iter().sum::<u64>(), 2);
    }

    proptest! {
        #[test]
        fn matches_textbook_population_variance(values in proptest::collection::vec(0.0f64..1.0, 1..50)) {
            let (p, c) = posterior_stats(&values);
            let t = values.len() as f64;
            let mean = values.iter().sum::<f64>() / t;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
            prop_assert!((p - mean).abs() < 1e-12);
            prop_assert!((c - var).abs() < 1e-12);
            prop_assert!(c >= 0.0);
        }

        #[test]
        fn pass_order_is_irrelevant(mut values in proptest::collection::vec(0.0f64..1.0, 1..50), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let before = posterior_stats(&values);
            values.shuffle(&mut crate::nn::stream_rng(seed, 0));
            let after = posterior_stats(&values);
            prop_assert_eq!(before.0.to_bits(), after.0.to_bits());
            prop_assert_eq!(before.1.to_bits(), after.1.to_bits());
        }

        #[test]
        fn histogram_conserves_samples(c in proptest::collection::vec(0.0f64..0.3, 1..80)) {
            let n = c.len();
            let r = McEnsembleResult {
                outputs: Matrix::zeros(n, 1),
                posterior_mean: vec![0.0; n],
                uncertainty: c,
                passes: 1,
            };
            prop_assert_eq!(uncertainty_summary(&r).histogram.iter().sum::<u64>(), n as u64);
        }
    }
}
