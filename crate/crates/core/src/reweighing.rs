//! Per-(group, label) sample weights that make the protected attribute and the target
//! statistically independent on the training split.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};

/// One `(t, label)` cell. `t` is the binarized protected value, `label` the target
/// (1 = favourable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellWeight {
    pub t: u8,
    pub label: u8,
    pub count: usize,
    pub p_expected: f64,
    pub p_actual: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweighingWeights {
    pub n: usize,
    /// Cells in the order (0,0), (0,1), (1,0), (1,1).
    pub cells: Vec<CellWeight>,
}

fn cell_name(t: u8, label: u8) -> String {
    format!("(t={t}, label={})", if label == 1 { '+' } else { '-' })
}

fn check_binary(name: &str, values: &[u8]) -> Result<()> {
    match values.iter().find(|&&v| v > 1) {
        Some(v) => Err(Error::Data(format!("{name} holds non-binary value {v}"))),
        None => Ok(()),
    }
}

/// `W(t, label) = P_exp / P_act = (n_t * n_label) / (N * n_{t,label})`.
pub fn compute_weights(targets: &[u8], protected: &[u8]) -> Result<ReweighingWeights> {
    if targets.len() != protected.len() {
        return Err(Error::Shape(format!(
            "{} targets but {} protected values",
            targets.len(),
            protected.len()
        )));
    }
    check_binary("target", targets)?;
    check_binary("protected label", protected)?;
    let n = targets.len();
    let mut joint = [[0usize; 2]; 2];
    for (&y, &t) in targets.iter().zip(protected) {
        joint[t as usize][y as usize] += 1;
    }
    let n_t = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let n_label = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let nf = n as f64;
    let mut cells = Vec::with_capacity(4);
    for t in 0..2u8 {
        for label in 0..2u8 {
            let count = joint[t as usize][label as usize];
            if count == 0 {
                return Err(Error::UndefinedMetric(format!(
                    "reweighing cell {} is empty; its weight is undefined",
                    cell_name(t, label)
                )));
            }
            let expected = n_t[t as usize] as f64 * n_label[label as usize] as f64;
            cells.push(CellWeight {
                t,
                label,
                count,
                p_expected: expected / (nf * nf),
                p_actual: count as f64 / nf,
                weight: expected / (nf * count as f64),
            });
        }
    }
    Ok(ReweighingWeights { n, cells })
}

impl ReweighingWeights {
    pub fn weight(&self, t: u8, label: u8) -> Result<f64> {
        self.cells
            .iter()
            .find(|c| c.t == t && c.label == label)
            .map(|c| c.weight)
            .ok_or_else(|| Error::Contract(format!("no weight for cell {}", cell_name(t, label))))
    }

    /// Per-sample weights for aligned target and protected vectors.
    pub fn per_sample(&self, targets: &[u8], protected: &[u8]) -> Result<Vec<f64>> {
        if targets.len() != protected.len() {
            return Err(Error::Shape("targets and protected labels differ in length".into()));
        }
        targets
            .iter()
            .zip(protected)
            .map(|(&y, &t)| self.weight(t, y))
            .collect()
    }

    /// Per-cell table: `t,label,P_exp,P_act,W`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "label", "P_exp", "P_act", "W"])?;
        for c in &self.cells {
            w.write_record([
                c.t.to_string(),
                if c.label == 1 { "+" } else { "-" }.to_string(),
                c.p_expected.to_string(),
                c.p_actual.to_string(),
                c.weight.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Attaches per-sample weights to a training split.
pub fn apply_weights(data: &Dataset, weights: &ReweighingWeights, protected_label: &str) -> Result<Dataset> {
    if data.split() != Split::Train {
        return Err(Error::Contract("reweighing applies to the training split only".into()));
    }
    let protected = data.protected(protected_label)?;
    let w = weights.per_sample(data.target(), protected.values())?;
    data.clone().with_sample_weights(w)
}

/// Computes weights on `data` and returns the weighted copy.
pub fn reweigh(data: &Dataset, protected_label: &str) -> Result<(Dataset, ReweighingWeights)> {
    let weights = compute_weights(data.target(), data.protected(protected_label)?.values())?;
    Ok((apply_weights(data, &weights, protected_label)?, weights))
}

/// Weighted empirical joint distribution `P[t][label]`.
pub fn weighted_joint(targets: &[u8], protected: &[u8], weights: &[f64]) -> [[f64; 2]; 2] {
    let mut joint = [[0.0; 2]; 2];
    for ((&y, &t), &w) in targets.iter().zip(protected).zip(weights) {
        joint[t as usize][y as usize] += w;
    }
    let total: f64 = joint.iter().flatten().sum();
    joint.iter_mut().flatten().for_each(|v| *v /= total);
    joint
}

/// Plug-in mutual information (nats) between `t` and `label` under sample weights.
pub fn weighted_mutual_information(targets: &[u8], protected: &[u8], weights: &[f64]) -> f64 {
    let joint = weighted_joint(targets, protected, weights);
    let pt = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let pl = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for t in 0..2 {
        for l in 0..2 {
            let p = joint[t][l];
            if p > 0.0 {
                mi += p * (p / (pt[t] * pl[l])).ln();
            }
        }
    }
    mi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 10 rows: 5 with t=1, 6 with label 0, 2 with t=1 and label 0.
    fn worked_example() -> (Vec<u8>, Vec<u8>) {
        let t = vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let y = vec![0, 0, 1, 1, 1, 0, 0, 0, 0, 1];
        (y, t)
    }

    #[test]
    fn worked_example_weight_is_one_and_a_half() {
        let (y, t) = worked_example();
        let w = compute_weights(&y, &t).unwrap();
        assert_eq!(w.weight(1, 0).unwrap(), 1.5);
        let per = w.per_sample(&y, &t).unwrap();
        assert!(per[..2].iter().all(|&v| v == 1.5));
    }

    #[test]
    fn balanced_cells_give_unit_weights() {
        let w = compute_weights(&[1, 0, 1, 0], &[0, 0, 1, 1]).unwrap();
        assert!(w.cells.iter().all(|c| c.weight == 1.0));
    }

    #[test]
    fn empty_cell_is_named() {
        let err = compute_weights(&[1, 1, 0], &[0, 1, 1]).unwrap_err();
        assert!(err.to_string().contains("(t=0, label=-)"), "{err}");
    }

    #[test]
    fn expected_over_actual() {
        let (y, t) = worked_example();
        for c in compute_weights(&y, &t).unwrap().cells {
            assert!((c.weight - c.p_expected / c.p_actual).abs() < 1e-15);
        }
    }

    fn labels() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        // every cell seeded once so none is empty
        proptest::collection::vec((0u8..2, 0u8..2), 0..200).prop_map(|mut pairs| {
            pairs.extend([(0, 0), (0, 1), (1, 0), (1, 1)]);
            pairs.into_iter().unzip()
        })
    }

    proptest! {
        #[test]
        fn weighted_joint_factorizes((y, t) in labels()) {
            let w = compute_weights(&y, &t).unwrap();
            let per = w.per_sample(&y, &t).unwrap();
            let joint = weighted_joint(&y, &t, &per);
            for ti in 0..2 {
                for l in 0..2 {
                    let pt = joint[ti][0] + joint[ti][1];
                    let pl = joint[0][l] + joint[1][l];
                    prop_assert!((joint[ti][l] - pt * pl).abs() < 1e-9);
                }
            }
            prop_assert!(weighted_mutual_information(&y, &t, &per) < 1e-6);
        }

        #[test]
        fn duplication_and_scaling_invariant((y, t) in labels(), k in 2usize..5) {
            let base = compute_weights(&y, &t).unwrap();
            let y2: Vec<u8> = y.iter().copied().cycle().take(y.len() * k).collect();
            let t2: Vec<u8> = t.iter().copied().cycle().take(t.len() * k).collect();
            let scaled = compute_weights(&y2, &t2).unwrap();
            for (a, b) in base.cells.iter().zip(&scaled.cells) {
                prop_assert!((a.weight - b.weight).abs() < 1e-12);
            }
        }
    }
}
