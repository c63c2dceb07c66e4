//! Central finite-difference checks of every backward pass, in f64.
//!
//! Relative error per entry is `|a − n| / max(|a|, |n|, REL_FLOOR)`. The floor
//! keeps entries whose true gradient is essentially zero from dividing
//! roundoff noise by a near-zero magnitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    batch_norm_channel, batch_norm_channel_backward, conv2d_kernel_grad, conv2d_valid_single, cross_entropy, dense,
    dropout_mask, elu, elu_grad, global_max_pool, global_max_pool_backward, mean_var, softmax,
    softmax_cross_entropy_grad, ChannelStats,
};
use super::model::{backward, forward, Mode, ModelConfig, ModelParams};
use super::tensor::Tensor;
use crate::error::Result;

pub const STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < TOLERANCE)
    }

    fn push(&mut self, name: &str, analytic: &[f64], numeric: &[f64]) {
        self.entries.push(GradcheckEntry {
            name: name.to_string(),
            max_rel_error: max_rel_error(analytic, numeric),
            checked: analytic.len(),
        });
    }
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max)
}

/// (f(x + h·e_i) − f(x − h·e_i)) / 2h for every coordinate.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + STEP;
            let up = f(&probe);
            probe[i] = x[i] - STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn weighted(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_conv(rng: &mut ChaCha8Rng, report: &mut GradcheckReport) {
    let (h, w, fh, fw) = (6, 7, 3, 2);
    let (oh, ow) = (h - fh + 1, w - fw + 1);
    let input = uniform(rng, h * w, -1.0, 1.0);
    let kb = uniform(rng, fh * fw + 1, -1.0, 1.0);
    let r = uniform(rng, oh * ow, -1.0, 1.0);
    let loss = |p: &[f64]| {
        let mut out = vec![0.0; oh * ow];
        conv2d_valid_single(&input, h, w, &p[..fh * fw], fh, fw, p[fh * fw], &mut out);
        weighted(&r, &out)
    };
    let mut analytic = vec![0.0; fh * fw];
    let db = conv2d_kernel_grad(&input, h, w, &r, fh, fw, &mut analytic);
    analytic.push(db);
    report.push("conv", &analytic, &numeric_grad(&kb, loss));
}

fn check_batch_norm(rng: &mut ChaCha8Rng, report: &mut GradcheckReport) {
    let n = 12;
    let x = uniform(rng, n, -2.0, 3.0);
    let (scale, shift) = (1.3, -0.4);
    let r = uniform(rng, n, -1.0, 1.0);
    let bn = |x: &[f64], scale: f64, shift: f64| {
        let (mean, var) = mean_var(x);
        batch_norm_channel(x, ChannelStats { mean, var }, scale, shift)
    };
    let (mean, var) = mean_var(&x);
    let (dx, dscale, dshift) = batch_norm_channel_backward(&x, &r, ChannelStats { mean, var }, scale, true);
    let nx = numeric_grad(&x, |p| weighted(&r, &bn(p, scale, shift)));
    let nss = numeric_grad(&[scale, shift], |p| weighted(&r, &bn(&x, p[0], p[1])));
    let mut analytic = dx;
    analytic.extend([dscale, dshift]);
    let mut numeric = nx;
    numeric.extend(nss);
    report.push("batch_norm", &analytic, &numeric);
}

fn check_elu(rng: &mut ChaCha8Rng, report: &mut GradcheckReport) {
    // Keep samples away from the kink at 0.
    let x: Vec<f64> = uniform(rng, 16, 0.05, 2.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { -v } else { v })
        .collect();
    let r = uniform(rng, x.len(), -1.0, 1.0);
    let analytic: Vec<f64> = x.iter().zip(&r).map(|(&v, &g)| g * elu_grad(v)).collect();
    let numeric = numeric_grad(&x, |p| p.iter().zip(&r).map(|(&v, &g)| g * elu(v)).sum());
    report.push("elu", &analytic, &numeric);
}

fn check_max_pool(rng: &mut ChaCha8Rng, report: &mut GradcheckReport) {
    let map = uniform(rng, 20, -1.0, 1.0);
    let g = 0.7;
    let (_, idx) = global_max_pool(&map);
    let analytic = global_max_pool_backward(map.len(), idx, g);
    let numeric = numeric_grad(&map, |p| g * global_max_pool(p).0);
    report.push("global_max_pool", &analytic, &numeric);
}

fn check_dropout(rng: &mut ChaCha8Rng, report: &mut GradcheckReport) {
    let x = uniform(rng, 16, -1.0, 1.0);
    let mask: Vec<f64> = dropout_mask(16, 0.5, rng);
    let r = uniform(rng, 16, -1.0, 1.0);
    let analytic: Vec<f64> = mask.iter().zip(&r).map(|(m, g)| m * g).collect();
    let numeric = numeric_grad(&x, |p| p.iter().zip(&mask).zip(&r).map(|((v, m), g)| v * m * g).sum());
    report.push("dropout", &analytic, &numeric);
}

fn check_dense_softmax(rng: &mut ChaCha8Rng, report: &mut GradcheckReport) {
    let (n, c, k) = (3, 5, 4);
    let h = uniform(rng, n * c, -1.0, 1.0);
    let wb = uniform(rng, k * c + k, -1.0, 1.0);
    let labels: Vec<u8> = (0..n).map(|i| (i % k) as u8).collect();
    let loss = |wb: &[f64], h: &[f64]| {
        let probs: Vec<f64> = (0..n)
            .flat_map(|b| softmax(&dense(&wb[..k * c], &wb[k * c..], &h[b * c..(b + 1) * c])))
            .collect();
        cross_entropy(&probs, &labels, k)
    };
    let probs: Vec<f64> = (0..n)
        .flat_map(|b| softmax(&dense(&wb[..k * c], &wb[k * c..], &h[b * c..(b + 1) * c])))
        .collect();
    let dl = softmax_cross_entropy_grad(&probs, &labels, k);
    let mut analytic = vec![0.0; k * c + k + n * c];
    for b in 0..n {
        for j in 0..k {
            let g = dl[b * k + j];
            for i in 0..c {
                analytic[j * c + i] += g * h[b * c + i];
                analytic[k * c + k + b * c + i] += g * wb[j * c + i];
            }
            analytic[k * c + j] += g;
        }
    }
    let mut numeric = numeric_grad(&wb, |p| loss(p, &h));
    numeric.extend(numeric_grad(&h, |p| loss(&wb, p)));
    report.push("dense_softmax_cross_entropy", &analytic, &numeric);
}

/// Checks every trainable tensor of `config` through the full training-mode
/// forward pass (batch statistics, fixed dropout mask).
pub fn check_model(config: ModelConfig, batch: usize, seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::<f64>::init(config.clone(), seed)?;
    let plane = config.n_mels * config.n_frames;
    let inputs = Tensor::from_vec(
        &[batch, 1, config.n_mels, config.n_frames],
        uniform(&mut rng, batch * plane, -1.0, 1.0),
    )?;
    let labels: Vec<u8> = (0..batch).map(|i| (i % config.n_classes) as u8).collect();
    let dropout_seed = seed ^ 0x5eed;

    let (_, trace) = forward(&params, &inputs, Mode::Train, dropout_seed)?;
    let grads = backward(&params, trace, &labels)?;
    let names = params.trainable_names();
    let analytic = grads.tensors();
    for (idx, name) in names.iter().enumerate() {
        let base = params.trainable()[idx].data().to_vec();
        let mut probe = params.clone();
        let numeric = numeric_grad(&base, |p| {
            probe.trainable_mut()[idx].data_mut().copy_from_slice(p);
            let (probs, _) = forward(&probe, &inputs, Mode::Train, dropout_seed).expect("forward on finite inputs");
            cross_entropy(&probs, &labels, config.n_classes)
        });
        report.push(&format!("model/{name}"), analytic[idx].data(), &numeric);
    }
    Ok(())
}

/// Runs every per-layer check and the scaled-down full model check.
pub fn run_all(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport::default();
    check_conv(&mut rng, &mut report);
    check_batch_norm(&mut rng, &mut report);
    check_elu(&mut rng, &mut report);
    check_max_pool(&mut rng, &mut report);
    check_dropout(&mut rng, &mut report);
    check_dense_softmax(&mut rng, &mut report);
    check_model(ModelConfig::gradcheck_small(), 4, seed, &mut report)?;
    Ok(report)
}
