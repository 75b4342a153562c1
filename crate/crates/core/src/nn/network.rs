use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer, LayerGradient};
use super::loss::LossSpec;
use crate::error::{Error, Result};

/// Seeded RNG for an independent stream, e.g. one dropout pass or one training job.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dropout rate, the layers whose outputs are masked, and the seed for sampled masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub rate: f64,
    /// Layer indices (strictly increasing) whose activations are masked.
    pub placement: Vec<usize>,
    pub seed: u64,
}

impl DropoutSpec {
    pub fn none() -> Self {
        Self {
            rate: 0.0,
            placement: Vec::new(),
            seed: 0,
        }
    }

    pub fn new(rate: f64, placement: Vec<usize>, seed: u64) -> Result<Self> {
        let spec = Self {
            rate,
            placement,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.rate)));
        }
        if self.placement.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("dropout placement must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn keep_probability(&self) -> f64 {
        1.0 - self.rate
    }

    /// Draws an inverted-dropout mask: kept units carry `1 / keep`, dropped units `0`.
    pub fn draw_mask<R: Rng + ?Sized>(&self, layers: &[DenseLayer], rng: &mut R) -> DropoutMask {
        let keep = self.keep_probability();
        let scale = 1.0 / keep;
        let slots = self
            .placement
            .iter()
            .map(|&k| {
                let width = layers[k].out_dim();
                if self.rate == 0.0 {
                    vec![1.0; width]
                } else {
                    (0..width)
                        .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
                        .collect()
                }
            })
            .collect();
        DropoutMask { slots }
    }

    /// The mask `d_i` for pass `pass` under `seed`.
    pub fn mask_for_pass(&self, layers: &[DenseLayer], seed: u64, pass: u64) -> DropoutMask {
        self.draw_mask(layers, &mut stream_rng(seed, pass))
    }
}

/// One sampled dropout mask; `slots[j]` multiplies the output of layer `placement[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub slots: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub enum MaskMode<'a> {
    Off,
    /// Mask drawn from the network's dropout seed and this pass index.
    Sampled(u64),
    Fixed(&'a DropoutMask),
}

/// Where backpropagation is seeded for the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSeed {
    /// Seed is dL/d(output), after the final activation and any mask.
    Output,
    /// Seed is dL/d(pre-activation) of the final layer.
    PreActivation,
}

/// Ordered dense layers plus dropout configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<DenseLayer>,
    dropout: DropoutSpec,
}

/// Activation record from one forward pass; reusable across calls.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    dims: Vec<(usize, usize)>,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    /// `masked[k]` holds `post[k] ⊙ mask` when a mask slot targets layer `k`.
    masked: Vec<Vec<f64>>,
    slot_of_layer: Vec<Option<usize>>,
    mask: Vec<Vec<f64>>,
    masked_active: bool,
}

impl ForwardCache {
    /// Network output for the recorded pass.
    pub fn output(&self) -> &[f64] {
        let last = self.post.len() - 1;
        self.layer_output(last)
    }

    fn layer_output(&self, k: usize) -> &[f64] {
        if self.masked_active && self.slot_of_layer[k].is_some() {
            &self.masked[k]
        } else {
            &self.post[k]
        }
    }

    fn layer_input(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.input
        } else {
            self.layer_output(k - 1)
        }
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    /// Pre-activation values of layer `k`.
    pub fn pre_activation(&self, k: usize) -> &[f64] {
        &self.pre[k]
    }
}

/// Parameter gradients shaped like a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(layers: &[DenseLayer]) -> Self {
        Self {
            layers: layers.iter().map(LayerGradient::zeros_like).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(LayerGradient::values)
    }

    pub fn fill_zero(&mut self) {
        self.layers.iter_mut().for_each(LayerGradient::fill_zero);
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

/// Gradients of a batch loss with respect to parameters and each input row.
#[derive(Debug, Clone)]
pub struct Backward {
    pub params: Gradients,
    pub inputs: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn new(layers: Vec<DenseLayer>, dropout: DropoutSpec) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        dropout.validate()?;
        if let Some(&k) = dropout.placement.iter().find(|&&k| k >= layers.len()) {
            return Err(Error::Config(format!(
                "dropout placed after layer {k} of a {}-layer network",
                layers.len()
            )));
        }
        Ok(Self { layers, dropout })
    }

    /// Glorot-initialised MLP: `relu` hidden layers, then `output_activation` layers of
    /// width `output_dim` (omitted when `output_dim` is `None`).
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        output: Option<(usize, Activation)>,
        dropout: DropoutSpec,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream_rng(seed, 0);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input_dim;
        for &h in hidden {
            layers.push(DenseLayer::glorot(width, h, Activation::Relu, &mut rng)?);
            width = h;
        }
        if let Some((out, act)) = output {
            layers.push(DenseLayer::glorot(width, out, act, &mut rng)?);
        }
        Self::new(layers, dropout)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn dropout(&self) -> &DropoutSpec {
        &self.dropout
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn into_parts(self) -> (Vec<DenseLayer>, DropoutSpec) {
        (self.layers, self.dropout)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub fn sample_mask(&self, pass: u64) -> DropoutMask {
        self.dropout
            .mask_for_pass(&self.layers, self.dropout.seed, pass)
    }

    /// Scalar-output forward pass; the network must end in a single unit.
    pub fn forward(&self, input: &[f64], mode: MaskMode<'_>) -> Result<(f64, ForwardCache)> {
        if self.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "scalar forward on a network with {} outputs",
                self.output_dim()
            )));
        }
        let mut cache = ForwardCache::default();
        match mode {
            MaskMode::Off => self.forward_into(input, None, &mut cache)?,
            MaskMode::Sampled(pass) => {
                let mask = self.sample_mask(pass);
                self.forward_into(input, Some(&mask), &mut cache)?
            }
            MaskMode::Fixed(mask) => self.forward_into(input, Some(mask), &mut cache)?,
        }
        Ok((cache.output()[0], cache))
    }

    /// Forward pass recording into a reusable cache.
    pub fn forward_into(
        &self,
        input: &[f64],
        mask: Option<&DropoutMask>,
        cache: &mut ForwardCache,
    ) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n = self.layers.len();
        if let Some(m) = mask {
            if m.slots.len() != self.dropout.placement.len()
                || m
                    .slots
                    .iter()
                    .zip(&self.dropout.placement)
                    .any(|(s, &k)| s.len() != self.layers[k].out_dim())
            {
                return Err(Error::Shape("dropout mask does not fit the network".into()));
            }
        }
        cache.dims.clear();
        cache.dims.extend(self.layers.iter().map(|l| (l.in_dim(), l.out_dim())));
        cache.input.clear();
        cache.input.extend_from_slice(input);
        cache.pre.resize_with(n, Vec::new);
        cache.post.resize_with(n, Vec::new);
        cache.masked.resize_with(n, Vec::new);
        cache.slot_of_layer.clear();
        cache.slot_of_layer.resize(n, None);
        for (j, &k) in self.dropout.placement.iter().enumerate() {
            cache.slot_of_layer[k] = Some(j);
        }
        cache.masked_active = mask.is_some();
        cache.mask.resize_with(self.dropout.placement.len(), Vec::new);
        if let Some(m) = mask {
            for (dst, src) in cache.mask.iter_mut().zip(&m.slots) {
                dst.clear();
                dst.extend_from_slice(src);
            }
        }

        for k in 0..n {
            let (pre, post) = {
                let mut pre = std::mem::take(&mut cache.pre[k]);
                let mut post = std::mem::take(&mut cache.post[k]);
                self.layers[k].forward_into(cache.layer_input(k), &mut pre, &mut post);
                (pre, post)
            };
            if !post.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite activation in layer {k}")));
            }
            cache.pre[k] = pre;
            cache.post[k] = post;
            if let (true, Some(j)) = (cache.masked_active, cache.slot_of_layer[k]) {
                let mut masked = std::mem::take(&mut cache.masked[k]);
                masked.clear();
                masked.extend(cache.post[k].iter().zip(&cache.mask[j]).map(|(a, m)| a * m));
                cache.masked[k] = masked;
            }
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let matches = cache.dims.len() == self.layers.len()
            && cache
                .dims
                .iter()
                .zip(&self.layers)
                .all(|(&(i, o), l)| i == l.in_dim() && o == l.out_dim());
        if matches {
            Ok(())
        } else {
            Err(Error::Contract("forward cache does not belong to this network".into()))
        }
    }

    /// Backpropagates `output_grad` through the recorded pass, accumulating `scale` times the
    /// parameter gradients into `grads`. Writes the input gradient when requested.
    pub fn backprop_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        seed: GradientSeed,
        scale: f64,
        grads: &mut Gradients,
        input_grad: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        self.backprop_from(cache, output_grad, seed, scale, grads, input_grad, 0)
    }

    /// As [`NetworkParams::backprop_into`], but stops after layer `first_layer`; gradients of
    /// earlier layers are left untouched and no input gradient is produced unless
    /// `first_layer == 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn backprop_from(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        seed: GradientSeed,
        scale: f64,
        grads: &mut Gradients,
        input_grad: Option<&mut Vec<f64>>,
        first_layer: usize,
    ) -> Result<()> {
        self.check_cache(cache)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Shape("output gradient length".into()));
        }
        if grads.layers.len() != self.layers.len()
            || !grads.layers.iter().zip(&self.layers).all(|(g, l)| g.matches(l))
        {
            return Err(Error::Shape("gradient buffers do not match network".into()));
        }
        let n = self.layers.len();
        let mut upstream = output_grad.to_vec();
        let mut dz = Vec::new();
        let mut next = Vec::new();
        let mut input_grad = input_grad;
        for k in (first_layer..n).rev() {
            let layer = &self.layers[k];
            dz.clear();
            if k == n - 1 && seed == GradientSeed::PreActivation {
                dz.extend_from_slice(&upstream);
            } else {
                let mask = match (cache.masked_active, cache.slot_of_layer[k]) {
                    (true, Some(j)) => Some(&cache.mask[j]),
                    _ => None,
                };
                for o in 0..layer.out_dim() {
                    let g = mask.map_or(upstream[o], |m| upstream[o] * m[o]);
                    dz.push(g * layer.activation().derivative(cache.pre[k][o], cache.post[k][o]));
                }
            }
            let want_input = k > first_layer || (k == 0 && input_grad.is_some());
            layer.accumulate_backward(
                cache.layer_input(k),
                &dz,
                scale,
                &mut grads.layers[k],
                want_input.then_some(&mut next),
            );
            if k == 0 {
                if let Some(out) = input_grad.take() {
                    out.clear();
                    out.extend_from_slice(&next);
                }
            }
            std::mem::swap(&mut upstream, &mut next);
        }
        Ok(())
    }

    /// Gradients of the mean weighted loss over a batch of recorded passes.
    pub fn backward(
        &self,
        caches: &[ForwardCache],
        loss: &LossSpec,
        targets: &[f64],
    ) -> Result<Backward> {
        loss.check_batch(caches.len(), targets)?;
        if caches.is_empty() {
            return Err(Error::Contract("backward on an empty batch".into()));
        }
        if self.output_dim() != 1 {
            return Err(Error::Shape("loss backward needs a scalar-output network".into()));
        }
        let mut grads = Gradients::zeros_like(&self.layers);
        let mut inputs = Vec::with_capacity(caches.len());
        let scale = 1.0 / caches.len() as f64;
        for (i, (cache, &y)) in caches.iter().zip(targets).enumerate() {
            self.check_cache(cache)?;
            let p = cache.output()[0];
            let dl = loss.weight_at(i) * loss.derivative(p, y);
            let mut input_grad = Vec::new();
            self.backprop_into(cache, &[dl], GradientSeed::Output, scale, &mut grads, Some(&mut input_grad))?;
            // per-sample input gradient of the batch mean
            input_grad.iter_mut().for_each(|g| *g *= scale);
            inputs.push(input_grad);
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(Backward {
            params: grads,
            inputs,
        })
    }

    /// Mask-off probabilities for every row.
    pub fn predict<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        rows.map(|row| {
            self.forward_into(row, None, &mut cache)?;
            Ok(cache.output()[0])
        })
        .collect()
    }
}
