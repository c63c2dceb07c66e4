//! The single-layer vertical-filter CNN.
//!
//! Input is one log-mel plane (`n_mels × n_frames`). Six groups of filters
//! are correlated with it (valid, stride 1); every resulting channel goes
//! through batch norm, ELU and a global max over its whole map, which gives
//! one value per filter. The concatenated vector passes through dropout into
//! a dense softmax layer.
//!
//! Channels never interact before the dense layer, so forward and backward
//! are computed channel by channel (in parallel, with per-channel results
//! identical regardless of thread count).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{
    batch_norm_channel_backward, conv2d_kernel_grad, conv2d_valid_single, dense, dropout_mask, elu, elu_grad,
    mean_var, softmax, softmax_cross_entropy_grad, update_running, valid_output, ChannelStats,
};
use super::tensor::{check_finite, Real, Tensor};
use crate::error::{Error, Result};

/// One group of identically shaped filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGroupSpec {
    pub filters: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_mels: usize,
    pub n_frames: usize,
    pub groups: Vec<ConvGroupSpec>,
    pub n_classes: usize,
    pub dropout: f64,
}

const fn group(filters: usize, height: usize, width: usize) -> ConvGroupSpec {
    ConvGroupSpec {
        filters,
        height,
        width,
    }
}

impl ModelConfig {
    /// The reference inventory on an 80 × 247 input: 128 of 5×1 and 8×1,
    /// 64 of 5×3 and 80×3, 32 of 5×5 and 80×5 (448 channels).
    pub fn single_layer() -> Self {
        Self::single_layer_for(80, 247)
    }

    /// Same inventory on a reduced input: the full-height filters span all
    /// `n_mels` rows and short filters are capped at `n_mels`.
    pub fn single_layer_for(n_mels: usize, n_frames: usize) -> Self {
        let short = |h: usize| h.min(n_mels);
        Self {
            n_mels,
            n_frames,
            groups: vec![
                group(128, short(5), 1),
                group(128, short(8), 1),
                group(64, short(5), 3),
                group(64, n_mels, 3),
                group(32, short(5), 5),
                group(32, n_mels, 5),
            ],
            n_classes: 11,
            dropout: 0.5,
        }
    }

    /// Scaled-down model on an 8 × 8 input used for finite-difference checks.
    pub fn gradcheck_small() -> Self {
        Self {
            n_mels: 8,
            n_frames: 8,
            groups: vec![
                group(2, 3, 1),
                group(2, 2, 1),
                group(2, 3, 3),
                group(2, 8, 3),
                group(2, 3, 3),
                group(2, 8, 3),
            ],
            n_classes: 11,
            dropout: 0.5,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.groups.iter().map(|g| g.filters).sum()
    }

    /// (group, filter within group) for every channel, in concatenation order.
    pub fn channel_layout(&self) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, spec)| (0..spec.filters).map(move |f| (g, f)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.n_classes < 2 {
            return Err(Error::InvalidArgument("model needs filters and at least two classes".into()));
        }
        for g in &self.groups {
            if g.filters == 0 {
                return Err(Error::InvalidArgument("empty filter group".into()));
            }
            valid_output(self.n_mels, self.n_frames, g.height, g.width)?;
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Number of trainable scalars: filters and biases, BN scale and shift,
    /// dense weights and biases.
    pub fn parameter_count(&self) -> usize {
        let conv: usize = self.groups.iter().map(|g| g.filters * (g.height * g.width + 1)).sum();
        let c = self.n_channels();
        conv + 2 * c + c * self.n_classes + self.n_classes
    }
}

/// Forward-pass behaviour of batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// All trainable tensors plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    /// Per group: `[filters, height, width]`.
    pub conv_weights: Vec<Tensor<F>>,
    /// Per group: `[filters]`.
    pub conv_biases: Vec<Tensor<F>>,
    /// `[channels]`
    pub bn_scale: Tensor<F>,
    pub bn_shift: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    /// `[classes, channels]`
    pub dense_weight: Tensor<F>,
    pub dense_bias: Tensor<F>,
}

/// Gradients for every trainable tensor of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub conv_weights: Vec<Tensor<F>>,
    pub conv_biases: Vec<Tensor<F>>,
    pub bn_scale: Tensor<F>,
    pub bn_shift: Tensor<F>,
    pub dense_weight: Tensor<F>,
    pub dense_bias: Tensor<F>,
}

impl<F: Real> Gradients<F> {
    /// Tensors in the same order as [`ModelParams::trainable`].
    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            out.push(w);
            out.push(b);
        }
        out.extend([&self.bn_scale, &self.bn_shift, &self.dense_weight, &self.dense_bias]);
        out
    }
}

impl<F: Real> ModelParams<F> {
    /// He-uniform filters (bound √(6/fan_in), fan_in = height·width), zero
    /// biases, unit BN scale, zero shift. Dense weights start at U(±1/fan_in)
    /// so the untrained model predicts close to uniformly.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: &[usize], bound: f64| -> Tensor<F> {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| F::of(rng.gen_range(-bound..=bound))).collect();
            Tensor::from_vec(shape, data).expect("shape matches length")
        };
        let mut conv_weights = Vec::new();
        let mut conv_biases = Vec::new();
        for g in &config.groups {
            let fan_in = (g.height * g.width) as f64;
            conv_weights.push(uniform(&[g.filters, g.height, g.width], (6.0 / fan_in).sqrt()));
            conv_biases.push(Tensor::zeros(&[g.filters]));
        }
        let c = config.n_channels();
        let dense_weight = uniform(&[config.n_classes, c], 1.0 / c as f64);
        Ok(Self {
            conv_weights,
            conv_biases,
            bn_scale: Tensor::filled(&[c], F::one()),
            bn_shift: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::filled(&[c], F::one()),
            dense_weight,
            dense_bias: Tensor::zeros(&[config.n_classes]),
            config,
        })
    }

    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for g in 0..self.conv_weights.len() {
            names.push(format!("conv{g}.weight"));
            names.push(format!("conv{g}.bias"));
        }
        names.extend(["bn.scale", "bn.shift", "dense.weight", "dense.bias"].map(String::from));
        names
    }

    pub fn trainable(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            out.push(w);
            out.push(b);
        }
        out.extend([&self.bn_scale, &self.bn_shift, &self.dense_weight, &self.dense_bias]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for (w, b) in self.conv_weights.iter_mut().zip(self.conv_biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.extend([
            &mut self.bn_scale,
            &mut self.bn_shift,
            &mut self.dense_weight,
            &mut self.dense_bias,
        ]);
        out
    }

    /// Sum of trainable tensor sizes.
    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        Gradients {
            conv_weights: self.conv_weights.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            conv_biases: self.conv_biases.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            bn_scale: Tensor::zeros(self.bn_scale.shape()),
            bn_shift: Tensor::zeros(self.bn_shift.shape()),
            dense_weight: Tensor::zeros(self.dense_weight.shape()),
            dense_bias: Tensor::zeros(self.dense_bias.shape()),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.trainable_names().iter().zip(self.trainable()) {
            t.check_finite(name)?;
        }
        self.running_mean.check_finite("bn.running_mean")?;
        self.running_var.check_finite("bn.running_var")
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config.clone(),
            conv_weights: self.conv_weights.iter().map(Tensor::cast).collect(),
            conv_biases: self.conv_biases.iter().map(Tensor::cast).collect(),
            bn_scale: self.bn_scale.cast(),
            bn_shift: self.bn_shift.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            dense_weight: self.dense_weight.cast(),
            dense_bias: self.dense_bias.cast(),
        }
    }

    /// Folds the batch statistics of a training-mode trace into the running estimates.
    pub fn apply_running_stats(&mut self, trace: &ForwardTrace<F>) {
        if trace.mode != Mode::Train {
            return;
        }
        let layout = self.config.channel_layout();
        for (c, stats) in trace.stats.iter().enumerate() {
            let spec = self.config.groups[layout[c].0];
            let count = trace.batch * (self.config.n_mels - spec.height + 1) * (self.config.n_frames - spec.width + 1);
            let mut m = self.running_mean.data()[c].f64();
            let mut v = self.running_var.data()[c].f64();
            update_running(&mut m, &mut v, *stats, count);
            self.running_mean.data_mut()[c] = F::of(m);
            self.running_var.data_mut()[c] = F::of(v);
        }
    }
}

/// Values cached by [`forward`] for the backward pass.
#[derive(Debug)]
pub struct ForwardTrace<F> {
    pub mode: Mode,
    pub batch: usize,
    input: Vec<F>,
    /// Per channel: pre-BN maps for the whole batch (`batch × map`).
    maps: Vec<Vec<F>>,
    /// Per channel: statistics used to normalize.
    pub stats: Vec<ChannelStats>,
    /// `batch × channels` argmax positions within each map.
    pub argmax: Vec<usize>,
    /// `batch × channels` pooled ELU outputs (before dropout).
    pub pooled: Vec<F>,
    pub mask: Option<Vec<F>>,
    hidden: Vec<F>,
    /// `batch × classes`
    pub probs: Vec<F>,
}

struct ChannelOut<F> {
    map: Vec<F>,
    stats: ChannelStats,
    argmax: Vec<usize>,
    pooled: Vec<F>,
}

fn input_dims<F: Real>(config: &ModelConfig, inputs: &Tensor<F>) -> Result<usize> {
    let shape = inputs.shape();
    let (b, h, w) = match shape {
        [b, 1, h, w] | [b, h, w] => (*b, *h, *w),
        _ => return Err(Error::Shape(format!("expected [batch, 1, freq, time] input, got {shape:?}"))),
    };
    if (h, w) != (config.n_mels, config.n_frames) {
        return Err(Error::Shape(format!(
            "model expects {}x{} inputs, got {h}x{w}",
            config.n_mels, config.n_frames
        )));
    }
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(b)
}

fn run_channels<F: Real>(
    params: &ModelParams<F>,
    input: &[F],
    batch: usize,
    mode: Mode,
    keep_maps: bool,
) -> Vec<ChannelOut<F>> {
    let cfg = &params.config;
    let (h, w) = (cfg.n_mels, cfg.n_frames);
    let plane = h * w;
    let layout = cfg.channel_layout();
    layout
        .par_iter()
        .enumerate()
        .map(|(c, &(g, f))| {
            let spec = cfg.groups[g];
            let (fh, fw) = (spec.height, spec.width);
            let map_len = (h - fh + 1) * (w - fw + 1);
            let kernel = &params.conv_weights[g].data()[f * fh * fw..(f + 1) * fh * fw];
            let bias = params.conv_biases[g].data()[f];
            let mut z = vec![F::zero(); batch * map_len];
            for b in 0..batch {
                conv2d_valid_single(
                    &input[b * plane..(b + 1) * plane],
                    h,
                    w,
                    kernel,
                    fh,
                    fw,
                    bias,
                    &mut z[b * map_len..(b + 1) * map_len],
                );
            }
            let stats = match mode {
                Mode::Train => {
                    let (mean, var) = mean_var(&z);
                    ChannelStats { mean, var }
                }
                Mode::Eval => ChannelStats {
                    mean: params.running_mean.data()[c].f64(),
                    var: params.running_var.data()[c].f64(),
                },
            };
            let scale = params.bn_scale.data()[c];
            let shift = params.bn_shift.data()[c];
            let mean = F::of(stats.mean);
            let inv = F::of(stats.inv_std());
            let mut argmax = Vec::with_capacity(batch);
            let mut pooled = Vec::with_capacity(batch);
            for b in 0..batch {
                // ELU is strictly increasing, so the max of ELU(y) sits at the max of y.
                let maps = &z[b * map_len..(b + 1) * map_len];
                let mut best = F::neg_infinity();
                let mut idx = 0;
                for (i, &v) in maps.iter().enumerate() {
                    let y = scale * (v - mean) * inv + shift;
                    if y > best {
                        best = y;
                        idx = i;
                    }
                }
                argmax.push(idx);
                pooled.push(elu(best));
            }
            ChannelOut {
                map: if keep_maps { z } else { Vec::new() },
                stats,
                argmax,
                pooled,
            }
        })
        .collect()
}

fn dense_softmax_rows<F: Real>(params: &ModelParams<F>, hidden: &[F], batch: usize) -> Vec<F> {
    let c = params.config.n_channels();
    let mut probs = Vec::with_capacity(batch * params.config.n_classes);
    for b in 0..batch {
        let logits = dense(params.dense_weight.data(), params.dense_bias.data(), &hidden[b * c..(b + 1) * c]);
        probs.extend(softmax(&logits));
    }
    probs
}

/// Full forward pass. In training mode batch statistics normalize each channel
/// and a dropout mask is drawn from `dropout_seed`; in eval mode running
/// statistics are used and dropout is the identity.
pub fn forward<F: Real>(
    params: &ModelParams<F>,
    inputs: &Tensor<F>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(Vec<F>, ForwardTrace<F>)> {
    let batch = input_dims(&params.config, inputs)?;
    if mode == Mode::Train && batch < 2 {
        return Err(Error::InvalidArgument("batch norm needs at least 2 examples in training mode".into()));
    }
    let c = params.config.n_channels();
    let outs = run_channels(params, inputs.data(), batch, mode, true);

    let mut pooled = vec![F::zero(); batch * c];
    let mut argmax = vec![0usize; batch * c];
    let mut maps = Vec::with_capacity(c);
    let mut stats = Vec::with_capacity(c);
    for (ch, out) in outs.into_iter().enumerate() {
        for b in 0..batch {
            pooled[b * c + ch] = out.pooled[b];
            argmax[b * c + ch] = out.argmax[b];
        }
        maps.push(out.map);
        stats.push(out.stats);
    }
    check_finite(&pooled, "pooled features")?;

    let mask = match mode {
        Mode::Train if params.config.dropout > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            Some(dropout_mask::<F, _>(batch * c, params.config.dropout, &mut rng))
        }
        _ => None,
    };
    let hidden: Vec<F> = match &mask {
        Some(m) => pooled.iter().zip(m).map(|(&p, &k)| p * k).collect(),
        None => pooled.clone(),
    };
    let probs = dense_softmax_rows(params, &hidden, batch);
    check_finite(&probs, "softmax output")?;

    let trace = ForwardTrace {
        mode,
        batch,
        input: inputs.data().to_vec(),
        maps,
        stats,
        argmax,
        pooled,
        mask,
        hidden,
        probs: probs.clone(),
    };
    Ok((probs, trace))
}

/// Eval-mode class probabilities without caching anything for backward.
pub fn predict<F: Real>(params: &ModelParams<F>, inputs: &Tensor<F>) -> Result<Vec<F>> {
    let batch = input_dims(&params.config, inputs)?;
    let c = params.config.n_channels();
    let outs = run_channels(params, inputs.data(), batch, Mode::Eval, false);
    let mut pooled = vec![F::zero(); batch * c];
    for (ch, out) in outs.iter().enumerate() {
        for b in 0..batch {
            pooled[b * c + ch] = out.pooled[b];
        }
    }
    let probs = dense_softmax_rows(params, &pooled, batch);
    check_finite(&probs, "softmax output")?;
    Ok(probs)
}

/// Gradients of mean cross-entropy for the batch recorded in `trace`.
pub fn backward<F: Real>(params: &ModelParams<F>, trace: ForwardTrace<F>, labels: &[u8]) -> Result<Gradients<F>> {
    let cfg = &params.config;
    let batch = trace.batch;
    let c = cfg.n_channels();
    let k = cfg.n_classes;
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::Data(format!("label {bad} outside 0..{k}")));
    }

    let dlogits = softmax_cross_entropy_grad(&trace.probs, labels, k);
    let mut grads = params.zero_gradients();
    {
        let dw = grads.dense_weight.data_mut();
        for b in 0..batch {
            let h = &trace.hidden[b * c..(b + 1) * c];
            for j in 0..k {
                let g = dlogits[b * k + j];
                for (d, &hv) in dw[j * c..(j + 1) * c].iter_mut().zip(h) {
                    *d += g * hv;
                }
            }
        }
        let db = grads.dense_bias.data_mut();
        for b in 0..batch {
            for j in 0..k {
                db[j] += dlogits[b * k + j];
            }
        }
    }
    let w = params.dense_weight.data();
    let mut dpooled = vec![F::zero(); batch * c];
    for b in 0..batch {
        for j in 0..k {
            let g = dlogits[b * k + j];
            for (d, &wv) in dpooled[b * c..(b + 1) * c].iter_mut().zip(&w[j * c..(j + 1) * c]) {
                *d += g * wv;
            }
        }
    }
    if let Some(mask) = &trace.mask {
        dpooled.iter_mut().zip(mask).for_each(|(d, &m)| *d *= m);
    }

    let (h, wdt) = (cfg.n_mels, cfg.n_frames);
    let plane = h * wdt;
    let training = trace.mode == Mode::Train;
    let layout = cfg.channel_layout();
    let input = &trace.input;
    let per_channel: Vec<(Vec<F>, F, F, F)> = layout
        .par_iter()
        .enumerate()
        .map(|(ch, &(g, _))| {
            let spec = cfg.groups[g];
            let (fh, fw) = (spec.height, spec.width);
            let map_len = (h - fh + 1) * (wdt - fw + 1);
            let z = &trace.maps[ch];
            let stats = trace.stats[ch];
            let scale = params.bn_scale.data()[ch];
            let shift = params.bn_shift.data()[ch];
            let mean = F::of(stats.mean);
            let inv = F::of(stats.inv_std());
            let mut dy = vec![F::zero(); batch * map_len];
            for b in 0..batch {
                let am = trace.argmax[b * c + ch];
                let y = scale * (z[b * map_len + am] - mean) * inv + shift;
                dy[b * map_len + am] = dpooled[b * c + ch] * elu_grad(y);
            }
            let (dz, dscale, dshift) = batch_norm_channel_backward(z, &dy, stats, scale, training);
            let mut dkernel = vec![F::zero(); fh * fw];
            let mut dbias = F::zero();
            for b in 0..batch {
                dbias += conv2d_kernel_grad(
                    &input[b * plane..(b + 1) * plane],
                    h,
                    wdt,
                    &dz[b * map_len..(b + 1) * map_len],
                    fh,
                    fw,
                    &mut dkernel,
                );
            }
            (dkernel, dbias, dscale, dshift)
        })
        .collect();

    for (ch, ((dkernel, dbias, dscale, dshift), &(g, f))) in per_channel.into_iter().zip(&layout).enumerate() {
        let n = dkernel.len();
        grads.conv_weights[g].data_mut()[f * n..(f + 1) * n].copy_from_slice(&dkernel);
        grads.conv_biases[g].data_mut()[f] = dbias;
        grads.bn_scale.data_mut()[ch] = dscale;
        grads.bn_shift.data_mut()[ch] = dshift;
    }
    for (name, t) in params.trainable_names().iter().zip(grads.tensors()) {
        t.check_finite(&format!("gradient of {name}"))?;
    }
    Ok(grads)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_row<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
