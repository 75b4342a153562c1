//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fairmtl::nn::{
    Activation, DenseLayer, DropoutMask, DropoutSpec, LossKind, LossSpec, MaskMode, NetworkParams, PROB_EPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Random network with at most 3 layers and 16 units per layer, scalar sigmoid output.
pub fn random_network(rng: &mut ChaCha8Rng) -> NetworkParams {
    let depth = rng.gen_range(1..=3);
    let input = rng.gen_range(1..=6);
    let acts = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
    let mut layers = Vec::new();
    let mut width = input;
    for k in 0..depth {
        let (out, act) = if k == depth - 1 {
            (1, Activation::Sigmoid)
        } else {
            (rng.gen_range(1..=16), acts[rng.gen_range(0..3)])
        };
        let weights = (0..width * out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let biases = (0..out).map(|_| rng.gen_range(-0.5..0.5)).collect();
        layers.push(DenseLayer::new(width, out, weights, biases, act).unwrap());
        width = out;
    }
    let placement = if depth > 1 { vec![0] } else { vec![] };
    let dropout = DropoutSpec::new(0.3, placement, rng.gen()).unwrap();
    NetworkParams::new(layers, dropout).unwrap()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Per-sample loss written in terms of the pre-sigmoid score `z`, so that `ln(1 - p)` keeps
/// full precision when the output saturates.
fn loss_from_score(spec: &LossSpec, z: f64, t: f64) -> f64 {
    let p = 1.0 / (1.0 + (-z).exp());
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return spec.pointwise(p, t);
    }
    let q = 1.0 / (1.0 + z.exp());
    let (ln_p, ln_q) = (-softplus(-z), -softplus(z));
    match spec.kind {
        LossKind::BinaryCrossEntropy => -(t * ln_p + (1.0 - t) * ln_q),
        LossKind::Focal => -(t * spec.alpha * q.powf(spec.gamma) * ln_p + (1.0 - t) * p.powf(spec.gamma) * ln_q),
    }
}

/// Mean loss of `net` on a batch, every sample under the same mask.
pub fn batch_loss(
    net: &NetworkParams,
    rows: &[Vec<f64>],
    targets: &[f64],
    spec: &LossSpec,
    mask: Option<&DropoutMask>,
) -> f64 {
    let last = net.layers().len() - 1;
    assert_eq!(net.layers()[last].activation(), Activation::Sigmoid);
    let mode = mask.map_or(MaskMode::Off, MaskMode::Fixed);
    let total: f64 = rows
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (r, &t))| {
            let (_, cache) = net.forward(r, mode).unwrap();
            let w = spec.sample_weights.as_ref().map_or(1.0, |w| w[i]);
            w * loss_from_score(spec, cache.pre_activation(last)[0], t)
        })
        .sum();
    total / rows.len() as f64
}

fn with_param(net: &NetworkParams, layer: usize, idx: usize, delta: f64) -> NetworkParams {
    let (mut layers, dropout) = net.clone().into_parts();
    let l = &layers[layer];
    let (mut w, mut b) = (l.weights().to_vec(), l.biases().to_vec());
    if idx < w.len() {
        w[idx] += delta;
    } else {
        b[idx - w.len()] += delta;
    }
    layers[layer] = DenseLayer::new(l.in_dim(), l.out_dim(), w, b, l.activation()).unwrap();
    NetworkParams::new(layers, dropout).unwrap()
}

/// Central-difference gradient with respect to every parameter, layer by layer
/// (weights then biases).
pub fn fd_param_gradients(
    net: &NetworkParams,
    rows: &[Vec<f64>],
    targets: &[f64],
    spec: &LossSpec,
    mask: Option<&DropoutMask>,
) -> Vec<Vec<f64>> {
    net.layers()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            (0..l.parameter_count())
                .map(|i| {
                    let up = batch_loss(&with_param(net, k, i, FD_STEP), rows, targets, spec, mask);
                    let dn = batch_loss(&with_param(net, k, i, -FD_STEP), rows, targets, spec, mask);
                    (up - dn) / (2.0 * FD_STEP)
                })
                .collect()
        })
        .collect()
}

/// Central-difference gradient of the batch loss with respect to each input coordinate.
pub fn fd_input_gradients(
    net: &NetworkParams,
    rows: &[Vec<f64>],
    targets: &[f64],
    spec: &LossSpec,
    mask: Option<&DropoutMask>,
) -> Vec<Vec<f64>> {
    (0..rows.len())
        .map(|s| {
            (0..rows[s].len())
                .map(|j| {
                    let mut up = rows.to_vec();
                    up[s][j] += FD_STEP;
                    let mut dn = rows.to_vec();
                    dn[s][j] -= FD_STEP;
                    (batch_loss(net, &up, targets, spec, mask) - batch_loss(net, &dn, targets, spec, mask))
                        / (2.0 * FD_STEP)
                })
                .collect()
        })
        .collect()
}

/// Central-difference gradient of a scalar function of one input row.
pub fn fd_scalar_input_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            up[j] += FD_STEP;
            let mut dn = x.to_vec();
            dn[j] -= FD_STEP;
            (f(&up) - f(&dn)) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inputs that keep every pre-activation at least `margin` away from 0, so the FD step
/// never straddles a relu kink.
pub fn safe_inputs(
    net: &NetworkParams,
    rng: &mut ChaCha8Rng,
    count: usize,
    mask: Option<&DropoutMask>,
) -> Vec<Vec<f64>> {
    let margin = 1e-3;
    let mut rows = Vec::new();
    while rows.len() < count {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mode = mask.map_or(MaskMode::Off, MaskMode::Fixed);
        let (_, cache) = net.forward(&x, mode).unwrap();
        let ok = (0..net.layers().len())
            .all(|k| cache.pre_activation(k).iter().all(|z| z.abs() > margin));
        if ok {
            rows.push(x);
        }
    }
    rows
}

/// Result of one gradient check.
pub struct GradCheck {
    pub max_param_rel: f64,
    pub max_input_rel: f64,
}

pub fn check_network(net: &NetworkParams, rng: &mut ChaCha8Rng, spec: &LossSpec, use_mask: bool) -> GradCheck {
    let mask = use_mask.then(|| net.sample_mask(rng.gen()));
    let rows = safe_inputs(net, rng, 4, mask.as_ref());
    let targets: Vec<f64> = (0..rows.len()).map(|i| (i % 2) as f64).collect();
    let caches: Vec<_> = rows
        .iter()
        .map(|r| {
            let mode = mask.as_ref().map_or(MaskMode::Off, MaskMode::Fixed);
            net.forward(r, mode).unwrap().1
        })
        .collect();
    let analytic = net.backward(&caches, spec, &targets).unwrap();
    let fd_params = fd_param_gradients(net, &rows, &targets, spec, mask.as_ref());
    let fd_inputs = fd_input_gradients(net, &rows, &targets, spec, mask.as_ref());
    let mut max_param_rel: f64 = 0.0;
    for (g, fd) in analytic.params.layers.iter().zip(&fd_params) {
        for (a, n) in g.values().zip(fd) {
            max_param_rel = max_param_rel.max(rel_err(a, *n));
        }
    }
    let mut max_input_rel: f64 = 0.0;
    for (g, fd) in analytic.inputs.iter().zip(&fd_inputs) {
        for (a, n) in g.iter().zip(fd) {
            max_input_rel = max_input_rel.max(rel_err(*a, *n));
        }
    }
    GradCheck {
        max_param_rel,
        max_input_rel,
    }
}
