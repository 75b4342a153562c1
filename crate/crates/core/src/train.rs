//! Mini-batch Adam training of single-output networks.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::{
    stream_rng, AdamConfig, AdamState, ForwardCache, GradientSeed, Gradients, LossSpec,
    NetworkParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Loss family; per-sample weights come from the dataset.
    pub loss: LossSpec,
    pub seed: u64,
    /// Layers before this index are frozen.
    pub trainable_from: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            adam: AdamConfig::default(),
            loss: LossSpec::bce(),
            seed: 0,
            trainable_from: 0,
        }
    }
}

/// Trains `params` in place; returns the mean training loss of each epoch.
pub fn fit(params: &mut NetworkParams, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Contract("training on an empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if params.input_dim() != data.n_features() || params.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "network {}->{} does not fit {} features with a binary target",
            params.input_dim(),
            params.output_dim(),
            data.n_features()
        )));
    }
    let n_layers = params.layers().len();
    if cfg.trainable_from >= n_layers {
        return Err(Error::Config(format!(
            "trainable_from {} leaves no trainable layer of {n_layers}",
            cfg.trainable_from
        )));
    }
    cfg.loss.validate()?;
    let from = cfg.trainable_from;
    let mut adam = AdamState::new(&params.layers()[from..], cfg.adam);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::zeros_like(params.layers());
    let mut cache = ForwardCache::default();
    let x = data.features();
    let y = data.target();
    let weights = data.sample_weights();
    let has_dropout = params.dropout().rate > 0.0 && !params.dropout().placement.is_empty();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mask = has_dropout.then(|| params.dropout().draw_mask(params.layers(), &mut rng));
                params.forward_into(x.row(i), mask.as_ref(), &mut cache)?;
                let p = cache.output()[0];
                let t = f64::from(y[i]);
                let w = weights.map_or(1.0, |w| w[i]);
                total += w * cfg.loss.pointwise(p, t);
                let dl = w * cfg.loss.derivative(p, t);
                params.backprop_from(&cache, &[dl], GradientSeed::Output, scale, &mut grads, None, from)?;
            }
            adam.step(params.layers_mut()[from..].iter_mut(), &grads.layers[from..])?;
        }
        history.push(total / data.len() as f64);
    }
    Ok(history)
}

/// Mask-off probabilities for every row of `data`.
pub fn predict(params: &NetworkParams, data: &Dataset) -> Result<Vec<f64>> {
    params.predict(data.features().iter_rows())
}

/// Accuracy of `k`-fold cross-validation over contiguous folds of `data`.
///
/// `init(fold)` must return a fresh network for each fold.
pub fn cross_validate(
    data: &Dataset,
    folds: usize,
    cfg: &TrainConfig,
    threshold: f64,
    init: impl Fn(usize) -> Result<NetworkParams>,
) -> Result<Vec<f64>> {
    if folds < 2 || folds > data.len() {
        return Err(Error::Config(format!("cannot run {folds}-fold CV on {} rows", data.len())));
    }
    let n = data.len();
    (0..folds)
        .map(|k| {
            let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
            let train_idx: Vec<usize> = (0..lo).chain(hi..n).collect();
            let val_idx: Vec<usize> = (lo..hi).collect();
            let train = data.subset(&train_idx, data.split());
            let val = data.subset(&val_idx, data.split());
            let mut net = init(k)?;
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(k as u64 + 1),
                ..cfg.clone()
            };
            fit(&mut net, &train, &fold_cfg)?;
            metrics::accuracy(&predict(&net, &val)?, val.target(), threshold)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::fairness::DEFAULT_THRESHOLD;
    use crate::nn::{Activation, DropoutSpec};

    fn separable() -> (Dataset, Dataset) {
        generate_synthetic(&SyntheticSpec {
            n_samples: 1000,
            n_features: 2,
            separation: 6.0,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn net(seed: u64) -> NetworkParams {
        let dropout = DropoutSpec::new(0.25, vec![1], seed).unwrap();
        NetworkParams::mlp(2, &[8, 8], Some((1, Activation::Sigmoid)), dropout, seed).unwrap()
    }

    #[test]
    fn learns_separable_data() {
        let (train, test) = separable();
        let mut params = net(0);
        let history = fit(&mut params, &train, &TrainConfig::default()).unwrap();
        assert!(history.last().unwrap() < &history[0]);
        let acc = metrics::accuracy(&predict(&params, &test).unwrap(), test.target(), DEFAULT_THRESHOLD).unwrap();
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let (train, _) = separable();
        let run = || {
            let mut p = net(3);
            let h = fit(&mut p, &train, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap();
            (p, h)
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn unit_weights_match_unweighted_training() {
        let (train, _) = separable();
        let weighted = train.clone().with_sample_weights(vec![1.0; train.len()]).unwrap();
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let (mut a, mut b) = (net(5), net(5));
        fit(&mut a, &train, &cfg).unwrap();
        fit(&mut b, &weighted, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_layers_stay_put() {
        let (train, _) = separable();
        let mut p = net(1);
        let before = p.clone();
        let cfg = TrainConfig { epochs: 1, trainable_from: 2, ..TrainConfig::default() };
        fit(&mut p, &train, &cfg).unwrap();
        assert_eq!(p.layers()[..2], before.layers()[..2]);
        assert_ne!(p.layers()[2], before.layers()[2]);
    }

    #[test]
    fn empty_or_mismatched_data_is_rejected() {
        let (train, _) = separable();
        let mut wrong = NetworkParams::mlp(3, &[4], Some((1, Activation::Sigmoid)), DropoutSpec::none(), 0).unwrap();
        assert!(fit(&mut wrong, &train, &TrainConfig::default()).is_err());
    }

    #[test]
    fn cross_validation_reports_each_fold() {
        let (train, _) = separable();
        let cfg = TrainConfig::default();
        let accs = cross_validate(&train, 3, &cfg, DEFAULT_THRESHOLD, |k| Ok(net(k as u64))).unwrap();
        assert_eq!(accs.len(), 3);
        assert!(accs.iter().all(|a| *a > 0.9), "{accs:?}");
    }
}
