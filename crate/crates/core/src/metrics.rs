//! Classification performance metrics.

use crate::error::{Error, Result};

pub fn accuracy(probabilities: &[f64], truth: &[u8], threshold: f64) -> Result<f64> {
    if probabilities.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            probabilities.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let correct = probabilities
        .iter()
        .zip(truth)
        .filter(|(&p, &y)| u8::from(p >= threshold) == y)
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic, ties sharing their average rank.
/// `None` when one class is absent.
pub fn auroc(scores: &[f64], truth: &[u8]) -> Result<Option<f64>> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            truth.len()
        )));
    }
    let n_pos = truth.iter().filter(|&&y| y == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block i..=j shares the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if truth[k] == 1 {
                rank_sum_pos += mean_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos as f64 * n_neg as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_threshold_hits() {
        let acc = accuracy(&[0.9, 0.2, 0.5, 0.4], &[1, 0, 0, 1], 0.5).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.7];
        let truth = [0, 0, 1, 1, 1, 0];
        // brute force over positive/negative pairs, ties count half
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in truth.iter().enumerate() {
            for (j, &yj) in truth.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        let a = auroc(&scores, &truth).unwrap().unwrap();
        assert!((a - wins / pairs).abs() < 1e-12);
        assert_eq!(auroc(&[0.2, 0.3], &[1, 1]).unwrap(), None);
    }
}
