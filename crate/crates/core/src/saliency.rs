//! Gradient saliency: input gradients of the class score, averaged into per-feature
//! importances.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mtl::MtlNetwork;
use crate::nn::{ForwardCache, GradientSeed, Gradients, NetworkParams};
use crate::svg::BarChart;

/// Which output is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyTarget {
    /// The pre-sigmoid class score.
    #[default]
    Score,
    Probability,
}

impl SaliencyTarget {
    fn seed(self) -> GradientSeed {
        match self {
            Self::Score => GradientSeed::PreActivation,
            Self::Probability => GradientSeed::Output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    SumToOne,
}

fn row_gradient(
    params: &NetworkParams,
    row: &[f64],
    target: SaliencyTarget,
    cache: &mut ForwardCache,
    grads: &mut Gradients,
) -> Result<Vec<f64>> {
    params.forward_into(row, None, cache)?;
    let mut g = Vec::with_capacity(row.len());
    params.backprop_into(cache, &[1.0], target.seed(), 1.0, grads, Some(&mut g))?;
    Ok(g)
}

/// Row `i` is the gradient of the chosen output with respect to input row `i`, dropout off.
pub fn saliency_map(params: &NetworkParams, inputs: &Matrix, target: SaliencyTarget) -> Result<Matrix> {
    if params.output_dim() != 1 {
        return Err(Error::Shape("saliency needs a scalar-output network".into()));
    }
    if inputs.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "inputs have {} columns, network expects {}",
            inputs.cols(),
            params.input_dim()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..inputs.rows())
        .into_par_iter()
        .map_init(
            || (ForwardCache::default(), Gradients::zeros_like(params.layers())),
            |(cache, grads), i| row_gradient(params, inputs.row(i), target, cache, grads),
        )
        .collect::<Result<_>>()?;
    to_matrix(rows, inputs.cols())
}

/// Saliency of the target-head path of an MTL network, dropout off.
pub fn mtl_target_saliency(net: &MtlNetwork, inputs: &Matrix, target: SaliencyTarget) -> Result<Matrix> {
    let trunk = net.trunk();
    let head = net.target_head();
    if inputs.cols() != trunk.input_dim() {
        return Err(Error::Shape("inputs do not match the MTL trunk".into()));
    }
    let rows: Vec<Vec<f64>> = (0..inputs.rows())
        .into_par_iter()
        .map_init(
            || (ForwardCache::default(), Gradients::zeros_like(trunk.layers())),
            |(cache, grads), i| {
                trunk.forward_into(inputs.row(i), None, cache)?;
                let z = head
                    .weights()
                    .iter()
                    .zip(cache.output())
                    .fold(head.biases()[0], |acc, (w, h)| acc + w * h);
                let dz = match target {
                    SaliencyTarget::Score => 1.0,
                    SaliencyTarget::Probability => {
                        let p = crate::nn::sigmoid(z);
                        p * (1.0 - p)
                    }
                };
                let upstream: Vec<f64> = head.weights().iter().map(|w| 0.0 + w * dz).collect();
                let mut g = Vec::new();
                trunk.backprop_into(cache, &upstream, GradientSeed::Output, 1.0, grads, Some(&mut g))?;
                Ok(g)
            },
        )
        .collect::<Result<_>>()?;
    to_matrix(rows, inputs.cols())
}

fn to_matrix(rows: Vec<Vec<f64>>, cols: usize) -> Result<Matrix> {
    let n = rows.len();
    Matrix::new(n, cols, rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub feature_names: Vec<String>,
    pub importance: Vec<f64>,
    pub normalization: Normalization,
    pub target: SaliencyTarget,
    /// Absolute values are taken per sample before averaging.
    pub aggregation: String,
    pub samples: usize,
}

/// Mean of per-sample absolute gradients per feature.
///
/// Each column is summed in sorted order, so the result does not depend on sample order.
pub fn average_saliency(
    gradients: &Matrix,
    feature_names: &[String],
    normalization: Normalization,
    target: SaliencyTarget,
) -> Result<SaliencyReport> {
    if gradients.rows() == 0 {
        return Err(Error::Contract("saliency average over zero samples".into()));
    }
    if feature_names.len() != gradients.cols() {
        return Err(Error::Shape(format!(
            "{} feature names for {} gradient columns",
            feature_names.len(),
            gradients.cols()
        )));
    }
    let n = gradients.rows() as f64;
    let mut importance: Vec<f64> = (0..gradients.cols())
        .map(|j| {
            let mut col: Vec<f64> = gradients.iter_rows().map(|r| r[j].abs()).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / n
        })
        .collect();
    if !importance.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite saliency".into()));
    }
    if normalization == Normalization::SumToOne {
        importance = sum_to_one(&importance);
    }
    Ok(SaliencyReport {
        feature_names: feature_names.to_vec(),
        importance,
        normalization,
        target,
        aggregation: "mean_abs".into(),
        samples: gradients.rows(),
    })
}

fn sum_to_one(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

/// L1 distance between the two reports' importances after scaling each to sum to one.
pub fn redistribution_score(a: &SaliencyReport, b: &SaliencyReport) -> Result<f64> {
    if a.feature_names != b.feature_names {
        return Err(Error::Shape("saliency reports cover different features".into()));
    }
    Ok(sum_to_one(&a.importance)
        .iter()
        .zip(sum_to_one(&b.importance))
        .map(|(x, y)| (x - y).abs())
        .sum())
}

impl SaliencyReport {
    /// Feature indices from most to least important.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importance.len()).collect();
        idx.sort_by(|&a, &b| self.importance[b].total_cmp(&self.importance[a]).then(a.cmp(&b)));
        idx
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "importance"])?;
        for (name, v) in self.feature_names.iter().zip(&self.importance) {
            w.write_record([name.as_str(), &v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn render_svg(&self, title: &str) -> String {
        BarChart {
            title,
            y_label: "mean |gradient|",
            categories: &self.feature_names,
            series: &[("importance", &self.importance)],
        }
        .render()
    }

    /// Side-by-side bars of two reports over the same features, each scaled to sum to one.
    pub fn render_comparison_svg(&self, other: &SaliencyReport, labels: (&str, &str), title: &str) -> Result<String> {
        if self.feature_names != other.feature_names {
            return Err(Error::Shape("saliency reports cover different features".into()));
        }
        let a = sum_to_one(&self.importance);
        let b = sum_to_one(&other.importance);
        Ok(BarChart {
            title,
            y_label: "share of importance",
            categories: &self.feature_names,
            series: &[(labels.0, &a), (labels.1, &b)],
        }
        .render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, DropoutSpec};
    use proptest::prelude::*;

    fn linear(w: Vec<f64>, b: f64) -> NetworkParams {
        let n = w.len();
        let layer = DenseLayer::new(n, 1, w, vec![b], Activation::Sigmoid).unwrap();
        NetworkParams::new(vec![layer], DropoutSpec::none()).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn linear_score_gradient_is_the_weight_vector() {
        let w = vec![0.5, -2.0, 0.0, 3.25];
        let net = linear(w.clone(), 0.3);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-5.0, 0.0, 0.5, 9.0]]).unwrap();
        let g = saliency_map(&net, &x, SaliencyTarget::Score).unwrap();
        for row in g.iter_rows() {
            assert_eq!(row, w.as_slice());
        }
        let report = average_saliency(&g, &names(4), Normalization::None, SaliencyTarget::Score).unwrap();
        assert_eq!(report.ranking(), vec![3, 1, 0, 2]);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let net = linear(vec![0.0; 3], 1.0);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        for t in [SaliencyTarget::Score, SaliencyTarget::Probability] {
            let g = saliency_map(&net, &x, t).unwrap();
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn probability_gradient_carries_sigmoid_slope() {
        let net = linear(vec![2.0], 0.0);
        let x = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let g = saliency_map(&net, &x, SaliencyTarget::Probability).unwrap();
        assert!((g.row(0)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absolute_values_before_the_mean() {
        let g = Matrix::from_rows(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap();
        let r = average_saliency(&g, &names(2), Normalization::None, SaliencyTarget::Score).unwrap();
        assert_eq!(r.importance, vec![1.0, 2.0]);
        let one = Matrix::from_rows(&[vec![-0.25, 4.0]]).unwrap();
        let r = average_saliency(&one, &names(2), Normalization::None, SaliencyTarget::Score).unwrap();
        assert_eq!(r.importance, vec![0.25, 4.0]);
    }

    #[test]
    fn sum_to_one_normalization() {
        let g = Matrix::from_rows(&[vec![0.1, 0.7, 0.2], vec![0.3, -0.1, 0.9]]).unwrap();
        let r = average_saliency(&g, &names(3), Normalization::SumToOne, SaliencyTarget::Score).unwrap();
        assert!((r.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redistribution_is_l1_of_shares() {
        let g1 = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let g2 = Matrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        let a = average_saliency(&g1, &names(2), Normalization::None, SaliencyTarget::Score).unwrap();
        let b = average_saliency(&g2, &names(2), Normalization::None, SaliencyTarget::Score).unwrap();
        assert!((redistribution_score(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(redistribution_score(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        let g = Matrix::zeros(0, 2);
        assert!(average_saliency(&g, &names(2), Normalization::None, SaliencyTarget::Score).is_err());
    }

    proptest! {
        #[test]
        fn report_ignores_sample_order(
            rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let a = Matrix::from_rows(&rows).unwrap();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut crate::nn::stream_rng(seed, 0));
            let b = Matrix::from_rows(&shuffled).unwrap();
            let ra = average_saliency(&a, &names(3), Normalization::SumToOne, SaliencyTarget::Score).unwrap();
            let rb = average_saliency(&b, &names(3), Normalization::SumToOne, SaliencyTarget::Score).unwrap();
            prop_assert_eq!(ra, rb);
        }

        #[test]
        fn linear_ranking_follows_weight_magnitude(w in proptest::collection::vec(-3.0f64..3.0, 2..8)) {
            let net = linear(w.clone(), 0.0);
            let x = Matrix::from_rows(&[vec![0.5; w.len()], vec![-1.0; w.len()]]).unwrap();
            let g = saliency_map(&net, &x, SaliencyTarget::Score).unwrap();
            let r = average_saliency(&g, &names(w.len()), Normalization::None, SaliencyTarget::Score).unwrap();
            let mut expected: Vec<usize> = (0..w.len()).collect();
            expected.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
            prop_assert_eq!(r.ranking(), expected);
        }
    }
}
