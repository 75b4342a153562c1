//! Two-task network with a shared trunk, per-epoch snapshots, and single-task models
//! rebuilt from those snapshots.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mc::{self, McEnsembleResult, UncertaintySummary};
use crate::metrics;
use crate::nn::{
    decode_sections, encode_sections, stream_rng, Activation, AdamConfig, AdamState, DenseLayer,
    DropoutMask, DropoutSpec, ForwardCache, GradientSeed, Gradients, LayerGradient, LossSpec,
    NetworkParams,
};
use crate::train::{self, TrainConfig};

const CONTAINER_KIND: &str = "mtl";
const MANIFEST_FORMAT: &str = "fairmtl-snapshots";
const MANIFEST_VERSION: u32 = 1;

/// Deterministic seed for job `index` under `seed`.
pub fn job_seed(seed: u64, index: u64) -> u64 {
    stream_rng(seed, 0x6a6f_6200_0000_0000 | index).gen()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub target_weight: f64,
    pub protected_weight: f64,
}

impl LossWeights {
    /// Both weights must be finite and positive. Whether the target outweighs the protected
    /// task is checked by [`LossWeights::check_priority`].
    pub fn new(target_weight: f64, protected_weight: f64) -> Result<Self> {
        for (name, w) in [("target", target_weight), ("protected", protected_weight)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Config(format!("{name} loss weight must be positive, got {w}")));
            }
        }
        Ok(Self {
            target_weight,
            protected_weight,
        })
    }

    pub fn check_priority(&self) -> Result<()> {
        if self.target_weight > self.protected_weight {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "target loss weight {} must exceed protected weight {}",
                self.target_weight, self.protected_weight
            )))
        }
    }

    pub fn combine(&self, target_loss: f64, protected_loss: f64) -> f64 {
        self.target_weight * target_loss + self.protected_weight * protected_loss
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            target_weight: 4.5,
            protected_weight: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlArch {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    /// Trunk layers followed by dropout; `None` means after the last hidden layer.
    pub dropout_after: Option<Vec<usize>>,
}

impl Default for MtlArch {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            dropout_rate: 0.25,
            dropout_after: None,
        }
    }
}

impl MtlArch {
    pub fn dropout_spec(&self, seed: u64) -> Result<DropoutSpec> {
        if self.hidden.is_empty() {
            return Err(Error::Config("the shared trunk needs at least one hidden layer".into()));
        }
        let placement = self
            .dropout_after
            .clone()
            .unwrap_or_else(|| vec![self.hidden.len() - 1]);
        DropoutSpec::new(self.dropout_rate, placement, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlNetwork {
    trunk: NetworkParams,
    target_head: DenseLayer,
    protected_head: DenseLayer,
}

/// Per-sample outputs of both heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutputs {
    pub target: f64,
    pub protected: f64,
}

#[derive(Debug, Default)]
struct HeadCache {
    trunk: ForwardCache,
    pre: Vec<f64>,
    target: Vec<f64>,
    protected: Vec<f64>,
}

impl MtlNetwork {
    pub fn new(trunk: NetworkParams, target_head: DenseLayer, protected_head: DenseLayer) -> Result<Self> {
        let width = trunk.output_dim();
        for (name, head) in [("target", &target_head), ("protected", &protected_head)] {
            if head.in_dim() != width || head.out_dim() != 1 {
                return Err(Error::Shape(format!(
                    "{name} head is {}->{}, trunk emits {width}",
                    head.in_dim(),
                    head.out_dim()
                )));
            }
            if head.activation() != Activation::Sigmoid {
                return Err(Error::Config(format!("{name} head must use a sigmoid output")));
            }
        }
        if trunk.layers().iter().any(|l| l.activation() == Activation::Sigmoid) {
            return Err(Error::Config("trunk layers must not carry the output activation".into()));
        }
        Ok(Self {
            trunk,
            target_head,
            protected_head,
        })
    }

    /// Glorot-initialized network for `input_dim` features.
    pub fn init(input_dim: usize, arch: &MtlArch, seed: u64) -> Result<Self> {
        let dropout = arch.dropout_spec(seed)?;
        let trunk = NetworkParams::mlp(input_dim, &arch.hidden, None, dropout, seed)?;
        let width = trunk.output_dim();
        let target_head = DenseLayer::glorot(width, 1, Activation::Sigmoid, &mut stream_rng(seed, 2))?;
        let protected_head = DenseLayer::glorot(width, 1, Activation::Sigmoid, &mut stream_rng(seed, 3))?;
        Self::new(trunk, target_head, protected_head)
    }

    pub fn trunk(&self) -> &NetworkParams {
        &self.trunk
    }

    pub fn target_head(&self) -> &DenseLayer {
        &self.target_head
    }

    pub fn protected_head(&self) -> &DenseLayer {
        &self.protected_head
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn forward_cached(&self, input: &[f64], mask: Option<&DropoutMask>, cache: &mut HeadCache) -> Result<HeadOutputs> {
        self.trunk.forward_into(input, mask, &mut cache.trunk)?;
        let h = cache.trunk.output();
        self.target_head.forward_into(h, &mut cache.pre, &mut cache.target);
        let target = cache.target[0];
        self.protected_head.forward_into(h, &mut cache.pre, &mut cache.protected);
        let protected = cache.protected[0];
        if !(target.is_finite() && protected.is_finite()) {
            return Err(Error::Numeric("non-finite head output".into()));
        }
        Ok(HeadOutputs { target, protected })
    }

    /// Both head probabilities; `mask` selects the trunk dropout mask (`None` = off).
    pub fn forward(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<HeadOutputs> {
        self.forward_cached(input, mask, &mut HeadCache::default())
    }

    /// Mask-off outputs for every row.
    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<HeadOutputs>> {
        let mut cache = HeadCache::default();
        inputs.iter_rows().map(|r| self.forward_cached(r, None, &mut cache)).collect()
    }

    /// Monte-Carlo passes through both heads; pass `i` uses one trunk mask for both tasks.
    pub fn mc_predict(&self, inputs: &Matrix, passes: usize, seed: u64) -> Result<(McEnsembleResult, McEnsembleResult)> {
        if passes == 0 {
            return Err(Error::Contract("Monte-Carlo ensemble needs T >= 1".into()));
        }
        let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..passes)
            .into_par_iter()
            .map(|pass| {
                let mask = self
                    .trunk
                    .dropout()
                    .mask_for_pass(self.trunk.layers(), seed, pass as u64);
                let mut cache = HeadCache::default();
                let mut t = Vec::with_capacity(inputs.rows());
                let mut a = Vec::with_capacity(inputs.rows());
                for row in inputs.iter_rows() {
                    let out = self.forward_cached(row, Some(&mask), &mut cache)?;
                    t.push(out.target);
                    a.push(out.protected);
                }
                Ok((t, a))
            })
            .collect::<Result<_>>()?;
        let (t, a): (Vec<_>, Vec<_>) = columns.into_iter().unzip();
        Ok((
            McEnsembleResult::from_outputs(mc::transpose(&t, inputs.rows()))?,
            McEnsembleResult::from_outputs(mc::transpose(&a, inputs.rows()))?,
        ))
    }

    fn to_sections(&self) -> Result<Vec<u8>> {
        let target = NetworkParams::new(vec![self.target_head.clone()], DropoutSpec::none())?;
        let protected = NetworkParams::new(vec![self.protected_head.clone()], DropoutSpec::none())?;
        encode_sections(
            CONTAINER_KIND,
            &[("trunk", &self.trunk), ("target_head", &target), ("protected_head", &protected)],
        )
    }

    fn from_sections(bytes: &[u8]) -> Result<Self> {
        let (kind, sections) = decode_sections(bytes)?;
        if kind != CONTAINER_KIND {
            return Err(Error::Data(format!("expected an MTL container, found kind {kind:?}")));
        }
        let take = |name: &str| -> Result<NetworkParams> {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| Error::Data(format!("MTL container lacks section {name:?}")))
        };
        let trunk = take("trunk")?;
        let head = |name: &str| -> Result<DenseLayer> {
            let (mut layers, _) = take(name)?.into_parts();
            match layers.len() {
                1 => Ok(layers.remove(0)),
                n => Err(Error::Data(format!("section {name:?} holds {n} layers, expected 1"))),
            }
        };
        let target = head("target_head")?;
        let protected = head("protected_head")?;
        Self::new(trunk, target, protected)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_sections()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_sections(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Trunk followed by the target head as a plain single-output network.
pub fn build_single_task(snapshot: &MtlNetwork) -> Result<NetworkParams> {
    let mut layers = snapshot.trunk.layers().to_vec();
    layers.push(snapshot.target_head.clone());
    NetworkParams::new(layers, snapshot.trunk.dropout().clone())
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub target: f64,
    pub protected: f64,
    pub joint: f64,
}

fn task_labels(data: &Dataset, protected_label: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.feature_names().iter().any(|n| n == protected_label) {
        return Err(Error::Config(format!(
            "protected label {protected_label:?} is an input feature"
        )));
    }
    let protected = data.protected(protected_label)?;
    Ok((
        data.target_f64(),
        protected.values().iter().map(|&v| f64::from(v)).collect(),
    ))
}

fn check_input(net: &MtlNetwork, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Contract("MTL training on an empty dataset".into()));
    }
    if net.input_dim() != data.n_features() {
        return Err(Error::Shape(format!(
            "network expects {} features, dataset has {}",
            net.input_dim(),
            data.n_features()
        )));
    }
    Ok(())
}

fn mean_losses(
    net: &MtlNetwork,
    x: &Matrix,
    rows: &[usize],
    y: &[f64],
    a: &[f64],
    loss: &LossSpec,
    weights: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let mut cache = HeadCache::default();
    let (mut lt, mut la) = (0.0, 0.0);
    for &i in rows {
        let out = net.forward_cached(x.row(i), None, &mut cache)?;
        let w = weights.map_or(1.0, |w| w[i]);
        lt += w * loss.pointwise(out.target, y[i]);
        la += w * loss.pointwise(out.protected, a[i]);
    }
    let n = rows.len() as f64;
    Ok((lt / n, la / n))
}

/// Mask-off joint loss of `net` over all rows of `data`.
pub fn joint_loss(net: &MtlNetwork, data: &Dataset, protected_label: &str, weights: &LossWeights) -> Result<JointLoss> {
    check_input(net, data)?;
    let (y, a) = task_labels(data, protected_label)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let (target, protected) = mean_losses(net, data.features(), &rows, &y, &a, &LossSpec::bce(), data.sample_weights())?;
    Ok(JointLoss {
        target,
        protected,
        joint: weights.combine(target, protected),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlTrainConfig {
    pub protected_label: String,
    pub arch: MtlArch,
    pub weights: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Monte-Carlo passes for the per-epoch uncertainty summaries.
    pub summary_passes: usize,
    /// Trailing share of the training rows held out for snapshot metrics.
    pub validation_fraction: f64,
}

impl MtlTrainConfig {
    pub fn new(protected_label: &str) -> Self {
        Self {
            protected_label: protected_label.to_string(),
            arch: MtlArch::default(),
            weights: LossWeights::default(),
            epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
            summary_passes: mc::DEFAULT_SUMMARY_PASSES,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetrics {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train: JointLoss,
    pub validation: JointLoss,
    pub target_uncertainty: UncertaintySummary,
    pub protected_uncertainty: UncertaintySummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub metrics: SnapshotMetrics,
    pub network: MtlNetwork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub protected_label: String,
    pub seed: u64,
    pub weights: LossWeights,
    pub initial: MtlNetwork,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotEntry {
    file: String,
    #[serde(flatten)]
    metrics: SnapshotMetrics,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotManifest {
    format: String,
    version: u32,
    protected_label: String,
    seed: u64,
    weights: LossWeights,
    config_hash: String,
    initial: String,
    snapshots: Vec<SnapshotEntry>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    fn file_name(&self, epoch: usize) -> String {
        let width = self.snapshots.len().to_string().len().max(3);
        format!("epoch_{epoch:0width$}.fmnn")
    }

    /// One container per epoch plus `manifest.json`.
    pub fn save(&self, dir: &Path, config_hash: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let initial = "initial.fmnn".to_string();
        self.initial.save(&dir.join(&initial))?;
        let mut entries = Vec::with_capacity(self.len());
        for s in &self.snapshots {
            let file = self.file_name(s.metrics.epoch);
            s.network.save(&dir.join(&file))?;
            entries.push(SnapshotEntry {
                file,
                metrics: s.metrics.clone(),
            });
        }
        let manifest = SnapshotManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            protected_label: self.protected_label.clone(),
            seed: self.seed,
            weights: self.weights.clone(),
            config_hash: config_hash.into(),
            initial,
            snapshots: entries,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest: SnapshotManifest =
            serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "unsupported snapshot manifest {} v{}",
                manifest.format, manifest.version
            )));
        }
        let snapshots = manifest
            .snapshots
            .into_iter()
            .map(|e| {
                Ok(Snapshot {
                    network: MtlNetwork::load(&dir.join(&e.file))?,
                    metrics: e.metrics,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if snapshots.windows(2).any(|w| w[0].metrics.epoch >= w[1].metrics.epoch) {
            return Err(Error::Data("snapshot epochs are not strictly increasing".into()));
        }
        Ok(Self {
            protected_label: manifest.protected_label,
            seed: manifest.seed,
            weights: manifest.weights,
            initial: MtlNetwork::load(&dir.join(&manifest.initial))?,
            snapshots,
        })
    }
}

struct HeadGrads {
    trunk: Gradients,
    target: LayerGradient,
    protected: LayerGradient,
}

impl HeadGrads {
    fn new(net: &MtlNetwork) -> Self {
        Self {
            trunk: Gradients::zeros_like(net.trunk.layers()),
            target: LayerGradient::zeros_like(&net.target_head),
            protected: LayerGradient::zeros_like(&net.protected_head),
        }
    }

    fn fill_zero(&mut self) {
        self.trunk.fill_zero();
        self.target.fill_zero();
        self.protected.fill_zero();
    }

    fn is_finite(&self) -> bool {
        self.trunk.is_finite()
            && self.target.values().all(f64::is_finite)
            && self.protected.values().all(f64::is_finite)
    }
}

/// Gradient of the weighted joint loss for one sample, added into `grads`.
#[allow(clippy::too_many_arguments)]
fn accumulate_sample(
    net: &MtlNetwork,
    cache: &HeadCache,
    y: f64,
    a: f64,
    sample_weight: f64,
    weights: &LossWeights,
    loss: &LossSpec,
    scale: f64,
    grads: &mut HeadGrads,
    dh: &mut [Vec<f64>; 2],
) -> Result<()> {
    let h = cache.trunk.output();
    let (pt, pa) = (cache.target[0], cache.protected[0]);
    let dzt = weights.target_weight * sample_weight * loss.derivative(pt, y) * pt * (1.0 - pt);
    let dza = weights.protected_weight * sample_weight * loss.derivative(pa, a) * pa * (1.0 - pa);
    let [dh_t, dh_a] = dh;
    net.target_head.accumulate_backward(h, &[dzt], scale, &mut grads.target, Some(dh_t));
    net.protected_head.accumulate_backward(h, &[dza], scale, &mut grads.protected, Some(dh_a));
    let upstream: Vec<f64> = dh_t.iter().zip(dh_a.iter()).map(|(t, p)| t + p).collect();
    net.trunk.backprop_into(&cache.trunk, &upstream, GradientSeed::Output, scale, &mut grads.trunk, None)
}

/// Trains an MTL network on `data` and keeps a deep copy after every epoch.
pub fn train_mtl(data: &Dataset, cfg: &MtlTrainConfig) -> Result<SnapshotSet> {
    let net = MtlNetwork::init(data.n_features(), &cfg.arch, cfg.seed)?;
    train_mtl_from(net, data, cfg)
}

/// As [`train_mtl`], starting from a given network.
pub fn train_mtl_from(mut net: MtlNetwork, data: &Dataset, cfg: &MtlTrainConfig) -> Result<SnapshotSet> {
    check_input(&net, data)?;
    let (y, a) = task_labels(data, &cfg.protected_label)?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if cfg.summary_passes == 0 {
        return Err(Error::Config("summary_passes must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Config(format!(
            "validation_fraction {} outside [0, 1)",
            cfg.validation_fraction
        )));
    }
    let n = data.len();
    let n_val = ((n as f64 * cfg.validation_fraction).floor() as usize).max(1);
    if n_val >= n {
        return Err(Error::Contract(format!("{n} rows leave nothing to train on")));
    }
    let n_fit = n - n_val;
    let fit_rows: Vec<usize> = (0..n_fit).collect();
    let val_rows: Vec<usize> = (n_fit..n).collect();
    let x = data.features();
    let val_x = x.select_rows(&val_rows);
    let loss = LossSpec::bce();
    let sample_weights = data.sample_weights();

    let initial = net.clone();
    let mut adam_trunk = AdamState::new(net.trunk.layers(), cfg.adam);
    let mut adam_target = AdamState::new(std::slice::from_ref(&net.target_head), cfg.adam);
    let mut adam_protected = AdamState::new(std::slice::from_ref(&net.protected_head), cfg.adam);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut order = fit_rows.clone();
    let mut grads = HeadGrads::new(&net);
    let mut cache = HeadCache::default();
    let mut dh = [Vec::new(), Vec::new()];
    let has_dropout = net.trunk.dropout().rate > 0.0 && !net.trunk.dropout().placement.is_empty();
    let mut snapshots = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut lt, mut la) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mask = has_dropout.then(|| net.trunk.dropout().draw_mask(net.trunk.layers(), &mut rng));
                let out = net.forward_cached(x.row(i), mask.as_ref(), &mut cache)?;
                let w = sample_weights.map_or(1.0, |w| w[i]);
                lt += w * loss.pointwise(out.target, y[i]);
                la += w * loss.pointwise(out.protected, a[i]);
                accumulate_sample(&net, &cache, y[i], a[i], w, &cfg.weights, &loss, scale, &mut grads, &mut dh)?;
            }
            if !grads.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in epoch {epoch}")));
            }
            adam_trunk.step(net.trunk.layers_mut().iter_mut(), &grads.trunk.layers)?;
            adam_target.step(std::iter::once(&mut net.target_head), std::slice::from_ref(&grads.target))?;
            adam_protected.step(std::iter::once(&mut net.protected_head), std::slice::from_ref(&grads.protected))?;
        }
        let (lt, la) = (lt / n_fit as f64, la / n_fit as f64);
        let (vt, va) = mean_losses(&net, x, &val_rows, &y, &a, &loss, sample_weights)?;
        let mc_seed = job_seed(cfg.seed, epoch as u64);
        let (mc_t, mc_a) = net.mc_predict(&val_x, cfg.summary_passes, mc_seed)?;
        snapshots.push(Snapshot {
            metrics: SnapshotMetrics {
                epoch,
                train: JointLoss {
                    target: lt,
                    protected: la,
                    joint: cfg.weights.combine(lt, la),
                },
                validation: JointLoss {
                    target: vt,
                    protected: va,
                    joint: cfg.weights.combine(vt, va),
                },
                target_uncertainty: mc_t.summary(),
                protected_uncertainty: mc_a.summary(),
            },
            network: net.clone(),
        });
    }
    Ok(SnapshotSet {
        protected_label: cfg.protected_label.clone(),
        seed: cfg.seed,
        weights: cfg.weights.clone(),
        initial,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Train only the target head; the trunk keeps its snapshot weights.
    pub head_only: bool,
    pub threshold: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            head_only: false,
            threshold: crate::fairness::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub params: NetworkParams,
    pub train_loss: Vec<f64>,
    /// Mask-off probabilities on the evaluation split.
    pub predictions: Vec<f64>,
    pub accuracy: f64,
}

/// Continues training a single-task network on the target label, then scores `eval`.
pub fn finetune_single_task(
    mut params: NetworkParams,
    train_data: &Dataset,
    eval: &Dataset,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    if train_data.is_empty() || eval.is_empty() {
        return Err(Error::Contract("fine-tuning needs non-empty train and evaluation data".into()));
    }
    let train_loss = if cfg.epochs == 0 {
        Vec::new()
    } else {
        let tc = TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            adam: cfg.adam,
            loss: LossSpec::bce(),
            seed,
            trainable_from: if cfg.head_only { params.layers().len() - 1 } else { 0 },
        };
        train::fit(&mut params, train_data, &tc)?
    };
    let predictions = train::predict(&params, eval)?;
    let accuracy = metrics::accuracy(&predictions, eval.target(), cfg.threshold)?;
    Ok(FinetuneOutcome {
        params,
        train_loss,
        predictions,
        accuracy,
    })
}
