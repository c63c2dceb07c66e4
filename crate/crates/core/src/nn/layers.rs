//! Layer primitives with their backward passes.
//!
//! Feature maps are single-channel planes stored row-major (`freq × time`).
//! The model runs each filter channel through conv → batch norm → ELU →
//! global max pool independently, so most functions here work on one
//! channel's maps across the batch.

use rand::Rng;

use super::tensor::{axpy, dot, Real};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const ELU_ALPHA: f64 = 1.0;

/// Output size of a valid (unpadded, stride 1) correlation.
pub fn valid_output(in_h: usize, in_w: usize, fh: usize, fw: usize) -> Result<(usize, usize)> {
    if fh == 0 || fw == 0 || fh > in_h || fw > in_w {
        return Err(Error::Shape(format!(
            "{fh}x{fw} filter does not fit a {in_h}x{in_w} input"
        )));
    }
    Ok((in_h - fh + 1, in_w - fw + 1))
}

/// Valid cross-correlation of one plane with one kernel, plus bias.
/// `out` must hold `(in_h−fh+1)·(in_w−fw+1)` values.
pub fn conv2d_valid_single<F: Real>(
    input: &[F],
    in_h: usize,
    in_w: usize,
    kernel: &[F],
    fh: usize,
    fw: usize,
    bias: F,
    out: &mut [F],
) {
    let (oh, ow) = (in_h - fh + 1, in_w - fw + 1);
    debug_assert_eq!(out.len(), oh * ow);
    out.iter_mut().for_each(|v| *v = bias);
    for di in 0..fh {
        for dj in 0..fw {
            let w = kernel[di * fw + dj];
            for i in 0..oh {
                let src = &input[(i + di) * in_w + dj..(i + di) * in_w + dj + ow];
                axpy(w, src, &mut out[i * ow..(i + 1) * ow]);
            }
        }
    }
}

/// Valid correlation of a `in_h × in_w` plane with `filters` kernels of `fh × fw`.
/// Returns `filters × oh × ow`.
pub fn conv2d_valid<F: Real>(
    input: &[F],
    in_h: usize,
    in_w: usize,
    weights: &[F],
    bias: &[F],
    fh: usize,
    fw: usize,
) -> Result<Vec<F>> {
    let (oh, ow) = valid_output(in_h, in_w, fh, fw)?;
    if input.len() != in_h * in_w || weights.len() != bias.len() * fh * fw {
        return Err(Error::Shape("conv2d_valid operand sizes disagree".into()));
    }
    let map = oh * ow;
    let mut out = vec![F::zero(); bias.len() * map];
    for (f, &b) in bias.iter().enumerate() {
        conv2d_valid_single(
            input,
            in_h,
            in_w,
            &weights[f * fh * fw..(f + 1) * fh * fw],
            fh,
            fw,
            b,
            &mut out[f * map..(f + 1) * map],
        );
    }
    Ok(out)
}

/// Accumulates the kernel gradient Σ dout(i,j)·input(i+di, j+dj) into `grad`
/// and returns Σ dout (the bias gradient).
pub fn conv2d_kernel_grad<F: Real>(
    input: &[F],
    in_h: usize,
    in_w: usize,
    dout: &[F],
    fh: usize,
    fw: usize,
    grad: &mut [F],
) -> F {
    let (oh, ow) = (in_h - fh + 1, in_w - fw + 1);
    for di in 0..fh {
        for dj in 0..fw {
            let mut acc = F::zero();
            for i in 0..oh {
                let src = &input[(i + di) * in_w + dj..(i + di) * in_w + dj + ow];
                acc += dot(&dout[i * ow..(i + 1) * ow], src);
            }
            grad[di * fw + dj] += acc;
        }
    }
    dout.iter().copied().sum()
}

/// Mean and biased variance, accumulated in f64.
pub fn mean_var<F: Real>(x: &[F]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.f64()).sum::<f64>() / n;
    let var = x.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Batch-norm statistics used for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    /// Biased batch variance in training mode, running variance in eval mode.
    pub var: f64,
}

impl ChannelStats {
    pub fn inv_std(&self) -> f64 {
        1.0 / (self.var + BN_EPS).sqrt()
    }
}

/// Exponential moving update of running statistics from a training batch of
/// `count` values per channel; the running variance uses the unbiased estimate.
pub fn update_running(running_mean: &mut f64, running_var: &mut f64, batch: ChannelStats, count: usize) {
    let unbiased = if count > 1 {
        batch.var * count as f64 / (count - 1) as f64
    } else {
        batch.var
    };
    *running_mean = BN_MOMENTUM * *running_mean + (1.0 - BN_MOMENTUM) * batch.mean;
    *running_var = BN_MOMENTUM * *running_var + (1.0 - BN_MOMENTUM) * unbiased;
}

/// y = scale·(x − mean)/√(var + eps) + shift over one channel's values.
pub fn batch_norm_channel<F: Real>(x: &[F], stats: ChannelStats, scale: F, shift: F) -> Vec<F> {
    let mean = F::of(stats.mean);
    let inv = F::of(stats.inv_std());
    x.iter().map(|&v| scale * (v - mean) * inv + shift).collect()
}

/// Backward of training-mode batch norm for one channel.
/// Returns (dx, dscale, dshift).
pub fn batch_norm_channel_backward<F: Real>(
    x: &[F],
    dy: &[F],
    stats: ChannelStats,
    scale: F,
    training: bool,
) -> (Vec<F>, F, F) {
    let mean = stats.mean;
    let inv = stats.inv_std();
    let n = x.len() as f64;
    let mut sum_dy = 0.0;
    let mut sum_dy_xhat = 0.0;
    for (&xv, &g) in x.iter().zip(dy) {
        let xhat = (xv.f64() - mean) * inv;
        sum_dy += g.f64();
        sum_dy_xhat += g.f64() * xhat;
    }
    let s = scale.f64();
    let dx = if training {
        let (m1, m2) = (sum_dy / n, sum_dy_xhat / n);
        x.iter()
            .zip(dy)
            .map(|(&xv, &g)| {
                let xhat = (xv.f64() - mean) * inv;
                F::of(s * inv * (g.f64() - m1 - xhat * m2))
            })
            .collect()
    } else {
        dy.iter().map(|&g| F::of(s * inv * g.f64())).collect()
    };
    (dx, F::of(sum_dy_xhat), F::of(sum_dy))
}

#[inline]
pub fn elu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::of(ELU_ALPHA) * x.exp_m1()
    }
}

/// dELU/dx evaluated at input `x`: 1 for x > 0, elu(x) + α otherwise.
#[inline]
pub fn elu_grad<F: Real>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else {
        elu(x) + F::of(ELU_ALPHA)
    }
}

/// Maximum of a map and the first (row-major) index attaining it.
pub fn global_max_pool<F: Real>(map: &[F]) -> (F, usize) {
    let mut best = map[0];
    let mut idx = 0;
    for (i, &v) in map.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            idx = i;
        }
    }
    (best, idx)
}

/// Scatters the pooled gradient back onto the argmax position.
pub fn global_max_pool_backward<F: Real>(len: usize, argmax: usize, grad: F) -> Vec<F> {
    let mut out = vec![F::zero(); len];
    out[argmax] = grad;
    out
}

/// Inverted-dropout mask: 0 with probability `rate`, 1/(1−rate) otherwise.
pub fn dropout_mask<F: Real, R: Rng>(n: usize, rate: f64, rng: &mut R) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
        .collect()
}

/// Applies dropout in training mode; identity in eval mode (`mask == None`).
pub fn dropout<F: Real>(x: &[F], mask: Option<&[F]>) -> Vec<F> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(&a, &b)| a * b).collect(),
        None => x.to_vec(),
    }
}

/// logits = W·h + b with W stored `out × in`.
pub fn dense<F: Real>(weight: &[F], bias: &[F], h: &[F]) -> Vec<F> {
    let n_in = h.len();
    bias.iter()
        .enumerate()
        .map(|(k, &b)| dot(&weight[k * n_in..(k + 1) * n_in], h) + b)
        .collect()
}

/// Numerically stable softmax (max subtracted).
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// −(1/N)·Σ ln p[i][label_i] over a row-major `N × classes` matrix.
pub fn cross_entropy<F: Real>(probs: &[F], labels: &[u8], classes: usize) -> f64 {
    let n = labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[i * classes + y as usize].f64().max(f64::MIN_POSITIVE).ln())
        .sum();
    total / n as f64
}

/// Gradient of mean cross-entropy w.r.t. logits: (p − onehot)/N.
pub fn softmax_cross_entropy_grad<F: Real>(probs: &[F], labels: &[u8], classes: usize) -> Vec<F> {
    let n = F::of(labels.len() as f64);
    let mut g: Vec<F> = probs.iter().map(|&p| p / n).collect();
    for (i, &y) in labels.iter().enumerate() {
        g[i * classes + y as usize] -= F::one() / n;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_shapes_and_values() {
        let input: Vec<f64> = (0..80 * 247).map(|i| (i % 13) as f64).collect();
        let out = conv2d_valid(&input, 80, 247, &vec![0.1; 240], &[0.0], 80, 3).unwrap();
        assert_eq!(out.len(), 245);

        let out = conv2d_valid(&input, 80, 247, &[1.0], &[0.0], 1, 1).unwrap();
        assert_eq!(out, input);

        let c = vec![0.75f64; 10 * 6];
        let out = conv2d_valid(&c, 10, 6, &[1.0; 5], &[0.0], 5, 1).unwrap();
        assert_eq!(out.len(), 6 * 6);
        assert!(out.iter().all(|&v| (v - 3.75).abs() < 1e-12));

        assert!(conv2d_valid(&c, 10, 6, &[1.0; 11], &[0.0], 11, 1).is_err());
    }

    #[test]
    fn bn_train_output_standardized() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 17) as f64 * 0.3 + 2.0).collect();
        let (mean, var) = mean_var(&x);
        let y = batch_norm_channel(&x, ChannelStats { mean, var }, 1.0, 0.0);
        let (m, v) = mean_var(&y);
        assert!(m.abs() < 1e-5);
        assert!((v - 1.0).abs() < 1e-5);
        assert!((v - var / (var + BN_EPS)).abs() < 1e-9);
    }

    #[test]
    fn bn_eval_identity_with_unit_stats() {
        let x = [0.5f64, -1.0, 2.0];
        let y = batch_norm_channel(&x, ChannelStats { mean: 0.0, var: 1.0 }, 1.0, 0.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-5 * a.abs() + 1e-12);
        }
    }

    #[test]
    fn running_stats_momentum() {
        let (mut m, mut v) = (0.0, 1.0);
        update_running(&mut m, &mut v, ChannelStats { mean: 1.0, var: 3.0 }, 4);
        assert!((m - 0.1).abs() < 1e-12);
        assert!((v - (0.9 + 0.1 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0f64), 0.0);
        assert_eq!(elu(2.0f64), 2.0);
        assert!((elu(-50.0f64) + 1.0).abs() < 1e-12);
        assert_eq!(elu_grad(3.0f64), 1.0);
        assert!((elu_grad(-1.0f64) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn max_pool_first_occurrence() {
        let mut map = vec![0.0f32; 20];
        map[7] = 5.0;
        assert_eq!(global_max_pool(&map), (5.0, 7));
        map[3] = 5.0;
        assert_eq!(global_max_pool(&map), (5.0, 3));
        let g = global_max_pool_backward(20, 3, 2.0f32);
        assert_eq!(g.iter().sum::<f32>(), 2.0);
        assert_eq!(g[3], 2.0);
    }

    #[test]
    fn max_pool_ignores_permutations() {
        let map: Vec<f64> = (0..30).map(|i| ((i * 11) % 30) as f64).collect();
        let mut shuffled = map.clone();
        shuffled.reverse();
        shuffled.swap(2, 17);
        assert_eq!(global_max_pool(&map).0, global_max_pool(&shuffled).0);
    }

    #[test]
    fn dropout_expectation_and_determinism() {
        let x = vec![1.0f64; 1];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 20000;
        let mean: f64 = (0..trials)
            .map(|_| dropout(&x, Some(&dropout_mask::<f64, _>(1, 0.5, &mut rng)))[0])
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");

        let a: Vec<f32> = dropout_mask(64, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b: Vec<f32> = dropout_mask(64, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        assert_eq!(dropout(&[3.0f32, 4.0], None), vec![3.0, 4.0]);
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[0.0f64; 11]);
        assert!(p.iter().all(|&v| (v - 1.0 / 11.0).abs() < 1e-12));
        let z = [0.3f64, -1.2, 4.0, 0.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 100.0).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let huge = softmax(&[1000.0f32, 0.0]);
        assert!(huge.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_anchors() {
        let uniform = vec![1.0f64 / 11.0; 22];
        assert!((cross_entropy(&uniform, &[0, 7], 11) - 11f64.ln()).abs() < 1e-12);
        assert!((11f64.ln() - 2.39790).abs() < 1e-5);

        let mut onehot = vec![0.0f64; 22];
        onehot[3] = 1.0;
        onehot[11 + 9] = 1.0;
        assert!(cross_entropy(&onehot, &[3, 9], 11) <= 1e-6);

        let mut probs = vec![0.0f64; 4];
        probs[0] = 0.5;
        probs[1] = 0.5;
        probs[2 + 1] = 0.25;
        probs[2] = 0.75;
        assert!((cross_entropy(&probs, &[0, 1], 2) - 1.03972).abs() < 1e-5);
    }

    #[test]
    fn ce_grad_rows_sum_to_zero() {
        let probs = softmax(&[0.1f64, 0.5, -0.3]);
        let g = softmax_cross_entropy_grad(&probs, &[2], 3);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!((g[2] - (probs[2] - 1.0)).abs() < 1e-12);
    }
}
