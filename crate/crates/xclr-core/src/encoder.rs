//! Feedforward encoder + projector with manual backpropagation, plus the
//! training loop that drives it from a similarity graph.
//!
//! The network is a chain of linear layers with ReLU between them (the
//! final layer stays linear). A split point divides backbone from
//! projector; evaluation reads the backbone activations, training losses
//! read the projector output.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{batch_targets, GraphSource};
use crate::losses::xclr_loss;
use crate::numerics::{dot, Matrix};

/// One linear layer; `weight` is `input_dim x output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Full parameter set. Layers `0..backbone_layers` form the backbone whose
/// output is the evaluation representation; the rest form the projector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    layers: Vec<Layer>,
    backbone_layers: usize,
}

/// Default architecture: two hidden backbone layers of width 256 and a two
/// layer projector down to 128.
pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_EMBED: usize = 128;
pub const DEFAULT_BACKBONE_LAYERS: usize = 2;

#[must_use]
pub fn default_layer_dims(input_dim: usize) -> Vec<usize> {
    vec![
        input_dim,
        DEFAULT_HIDDEN,
        DEFAULT_HIDDEN,
        DEFAULT_HIDDEN,
        DEFAULT_EMBED,
    ]
}

impl EncoderParams {
    /// Zero-initialized parameters. `dims` chains layer sizes
    /// (`dims[0]` = input); `backbone_layers` may be 0 (backbone = input).
    pub fn zeros(dims: &[usize], backbone_layers: usize) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument("layer dims must chain >= 1 sizes"));
        }
        let n_layers = dims.len() - 1;
        if backbone_layers >= n_layers {
            return Err(Error::InvalidArgument(
                "backbone must leave at least one projector layer",
            ));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for w in dims.windows(2) {
            layers.push(Layer {
                weight: Matrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            });
        }
        Ok(EncoderParams {
            layers,
            backbone_layers,
        })
    }

    /// He-initialized weights (`N(0, 2/fan_in)`), zero biases.
    pub fn he_init(dims: &[usize], backbone_layers: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(dims, backbone_layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let scale = libm::sqrt(2.0 / layer.weight.rows() as f64);
            for v in layer.weight.data_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = scale * g;
            }
        }
        Ok(params)
    }

    #[must_use]
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[must_use]
    pub fn backbone_layers(&self) -> usize {
        self.backbone_layers
    }

    #[must_use]
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    #[must_use]
    pub fn embedding_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").bias.len()
    }

    #[must_use]
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        for l in &self.layers {
            dims.push(l.bias.len());
        }
        dims
    }

    /// Same shapes, all zeros. Used for gradient and velocity buffers.
    #[must_use]
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        EncoderParams {
            layers,
            backbone_layers: self.backbone_layers,
        }
    }

    /// Rebuilds parameters from raw per-layer matrices (checkpoint load).
    pub fn from_layers(layers: Vec<Layer>, backbone_layers: usize) -> Result<Self> {
        if layers.is_empty() || backbone_layers >= layers.len() {
            return Err(Error::InvalidArgument(
                "backbone must leave at least one projector layer",
            ));
        }
        for w in layers.windows(2) {
            if w[0].bias.len() != w[1].weight.rows() {
                return Err(Error::ShapeMismatch("layer dims do not chain"));
            }
        }
        for l in &layers {
            if l.weight.cols() != l.bias.len() {
                return Err(Error::ShapeMismatch("bias length != weight cols"));
            }
        }
        Ok(EncoderParams {
            layers,
            backbone_layers,
        })
    }

    /// Total scalar parameter count, weights then bias per layer.
    #[must_use]
    pub fn flat_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Reads the flat parameter at `idx` (layer-major, weights before bias).
    #[must_use]
    pub fn flat_get(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            let w = l.weight.data().len();
            if idx < w {
                return l.weight.data()[idx];
            }
            idx -= w;
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("flat index out of range");
    }

    /// Adds `delta` to the flat parameter at `idx`.
    pub fn flat_add(&mut self, mut idx: usize, delta: f64) {
        for l in &mut self.layers {
            let w = l.weight.data().len();
            if idx < w {
                l.weight.data_mut()[idx] += delta;
                return;
            }
            idx -= w;
            if idx < l.bias.len() {
                l.bias[idx] += delta;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("flat index out of range");
    }
}

/// Per-layer pre-activations and activations kept for the backward pass.
/// `activations[0]` is the input; `activations[l + 1]` pairs with
/// `pre_activations[l]`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pre_activations: Vec<Matrix>,
    activations: Vec<Matrix>,
}

impl ForwardCache {
    #[must_use]
    pub fn activations(&self) -> &[Matrix] {
        &self.activations
    }
}

/// Runs the network. Returns backbone features, projector output, and the
/// cache needed by [`backward`].
pub fn forward(params: &EncoderParams, x: &Matrix) -> Result<(Matrix, Matrix, ForwardCache)> {
    if x.cols() != params.input_dim() {
        return Err(Error::DimMismatch {
            left: (x.rows(), x.cols()),
            right: (params.input_dim(), params.layers[0].weight.cols()),
        });
    }
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    let mut pre_activations = Vec::with_capacity(n_layers);
    activations.push(x.clone());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut pre = activations[l].matmul(&layer.weight)?;
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(layer.bias.iter()) {
                *v += b;
            }
        }
        let act = if l + 1 == n_layers {
            pre.clone()
        } else {
            let mut a = pre.clone();
            for v in a.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            a
        };
        pre_activations.push(pre);
        activations.push(act);
    }
    let backbone = activations[params.backbone_layers].clone();
    let projected = activations[n_layers].clone();
    Ok((
        backbone,
        projected,
        ForwardCache {
            pre_activations,
            activations,
        },
    ))
}

/// Reverse accumulation from `grad_projected` down to every weight and
/// bias. ReLU passes gradient exactly where the pre-activation is >= 0.
pub fn backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_projected: &Matrix,
) -> Result<EncoderParams> {
    let n_layers = params.layers.len();
    let last = &cache.activations[n_layers];
    if grad_projected.rows() != last.rows() || grad_projected.cols() != last.cols() {
        return Err(Error::ShapeMismatch("grad_projected shape"));
    }
    let mut grads = params.zeros_like();
    let mut delta = grad_projected.clone();
    for l in (0..n_layers).rev() {
        // delta is d loss / d pre_activations[l].
        let input = &cache.activations[l];
        let gw = input.transpose().matmul(&delta)?;
        grads.layers[l].weight = gw;
        for r in 0..delta.rows() {
            for (b, &d) in grads.layers[l].bias.iter_mut().zip(delta.row(r).iter()) {
                *b += d;
            }
        }
        if l > 0 {
            let mut prev = delta.matmul_transpose_b(&params.layers[l].weight)?;
            let pre = &cache.pre_activations[l - 1];
            for (v, &p) in prev.data_mut().iter_mut().zip(pre.data().iter()) {
                if p < 0.0 {
                    *v = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(grads)
}

/// Optimizer selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdMomentum,
    Lars,
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    Cosine,
}

/// Training hyperparameters. `batch_size` counts originals per batch; each
/// step sees twice as many augmented rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub schedule: LrSchedule,
    pub tau: f64,
    pub tau_s: f64,
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 30,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-6,
            optimizer: OptimizerKind::SgdMomentum,
            schedule: LrSchedule::Constant,
            tau: 0.1,
            tau_s: 0.1,
            noise_sigma: 0.7,
            dropout_prob: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument("weight_decay must be >= 0"));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::NonPositiveTemperature(self.tau));
        }
        if self.tau_s.is_nan() || self.tau_s <= 0.0 {
            return Err(Error::NonPositiveTemperature(self.tau_s));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidArgument("dropout_prob must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Momentum buffers, one per layer, shapes mirroring the parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocity: Vec<Layer>,
}

impl OptimizerState {
    #[must_use]
    pub fn new(params: &EncoderParams) -> Self {
        OptimizerState {
            velocity: params.zeros_like().layers,
        }
    }
}

const LARS_EPS: f64 = 1e-9;

fn lars_trust(w_norm: f64, g_norm: f64, weight_decay: f64) -> f64 {
    // Layers with zero weight or zero gradient norm fall back to the plain
    // learning rate; the ratio is meaningless there and would either
    // freeze zero-initialized tensors forever or explode on momentum.
    if w_norm > 0.0 && g_norm > 0.0 {
        w_norm / (g_norm + weight_decay * w_norm + LARS_EPS)
    } else {
        1.0
    }
}

fn step_tensor(
    w: &mut [f64],
    g: &[f64],
    v: &mut [f64],
    config: &TrainConfig,
    lr: f64,
) {
    let trust = match config.optimizer {
        OptimizerKind::SgdMomentum => 1.0,
        OptimizerKind::Lars => {
            let w_norm = libm::sqrt(dot(w, w));
            let g_norm = libm::sqrt(dot(g, g));
            lars_trust(w_norm, g_norm, config.weight_decay)
        }
    };
    for ((wv, &gv), vv) in w.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
        *vv = config.momentum * *vv + gv + config.weight_decay * *wv;
        *wv -= lr * trust * *vv;
    }
}

/// One optimizer update: `v <- m v + g + wd w; w <- w - lr v`, with the
/// per-tensor LARS trust ratio `|w| / (|g| + wd |w| + 1e-9)` scaling the
/// learning rate in LARS mode.
pub fn optimizer_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    optimizer_step_lr(params, grads, state, config, config.learning_rate)
}

fn optimizer_step_lr(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut OptimizerState,
    config: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if params.layers.len() != grads.layers.len()
        || params.layers.len() != state.velocity.len()
    {
        return Err(Error::ShapeMismatch("optimizer tensors"));
    }
    for ((p, g), v) in params
        .layers
        .iter_mut()
        .zip(grads.layers.iter())
        .zip(state.velocity.iter_mut())
    {
        if p.weight.rows() != g.weight.rows()
            || p.weight.cols() != g.weight.cols()
            || p.bias.len() != g.bias.len()
        {
            return Err(Error::ShapeMismatch("optimizer tensors"));
        }
        step_tensor(
            p.weight.data_mut(),
            g.weight.data(),
            v.weight.data_mut(),
            config,
            lr,
        );
        step_tensor(&mut p.bias, &g.bias, &mut v.bias, config, lr);
    }
    Ok(())
}

/// Gaussian noise followed by independent coordinate dropout.
#[must_use]
pub fn augment(row: &[f64], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len());
    for &x in row {
        let mut v = x;
        if config.noise_sigma > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            v += config.noise_sigma * g;
        }
        if config.dropout_prob > 0.0 && rng.gen::<f64>() < config.dropout_prob {
            v = 0.0;
        }
        out.push(v);
    }
    out
}

/// Per-epoch training log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Final parameters plus the per-epoch loss log.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub history: Vec<EpochMetrics>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    // Stream 0 is reserved for weight init; each epoch gets its own
    // stream so resumed runs replay the identical sequence.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    rng
}

/// Trains a fresh default-architecture encoder against a similarity
/// source. Targets are built per batch at `tau_s` and scored by
/// [`xclr_loss`] at `tau`; one-hot and SupCon training are the small-`tau_s`
/// limits of instance and class graphs.
pub fn train(
    features: &Matrix,
    source: &dyn GraphSource,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    let params = EncoderParams::he_init(
        &default_layer_dims(features.cols()),
        DEFAULT_BACKBONE_LAYERS,
        config.seed,
    )?;
    train_from(params, 0, features, source, config)
}

/// Continues training existing parameters from `start_epoch` (exclusive of
/// epochs already run). Momentum buffers restart at zero.
pub fn train_from(
    mut params: EncoderParams,
    start_epoch: usize,
    features: &Matrix,
    source: &dyn GraphSource,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    let n = features.rows();
    if n == 0 {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    if source.n_samples() != n {
        return Err(Error::SizeMismatch {
            left: n,
            right: source.n_samples(),
        });
    }
    if config.batch_size > n {
        return Err(Error::InvalidArgument("batch_size exceeds dataset size"));
    }
    if features.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch("feature dim != encoder input dim"));
    }

    let mut state = OptimizerState::new(&params);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in start_epoch..config.epochs {
        let lr = match config.schedule {
            LrSchedule::Constant => config.learning_rate,
            LrSchedule::Cosine => {
                let t = epoch as f64 / config.epochs as f64;
                config.learning_rate * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
            }
        };
        let mut rng = epoch_rng(config.seed, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut slot_count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let m = chunk.len();
            let mut batch = Matrix::zeros(2 * m, features.cols());
            let mut originals = Vec::with_capacity(2 * m);
            for (k, &idx) in chunk.iter().enumerate() {
                let a = augment(features.row(idx), config, &mut rng);
                let b = augment(features.row(idx), config, &mut rng);
                batch.row_mut(2 * k).copy_from_slice(&a);
                batch.row_mut(2 * k + 1).copy_from_slice(&b);
                originals.push(idx);
                originals.push(idx);
            }
            let (_, projected, cache) = forward(&params, &batch)?;
            let targets = batch_targets(source, &originals, config.tau_s)?;
            let loss = xclr_loss(&projected, &targets, config.tau)?;
            let grads = backward(&params, &cache, &loss.grad_z)?;
            optimizer_step_lr(&mut params, &grads, &mut state, config, lr)?;
            loss_sum += loss.value * (2 * m) as f64;
            slot_count += 2 * m;
        }
        history.push(EpochMetrics {
            epoch,
            mean_loss: loss_sum / slot_count as f64,
        });
    }
    Ok(TrainOutput { params, history })
}
