//! Sub-semitone pitch shifting: phase-vocoder time stretch by r followed by
//! resampling by 1/r, so duration is preserved and every frequency scales by r.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::PitchShiftParams;

/// Interpolator used for the final resampling stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampler {
    Linear,
    WindowedSinc,
}

const SINC_HALF_WIDTH: f64 = 16.0;

/// Frequency ratio for `n_steps` of an equal division of the octave.
pub fn pitch_ratio(n_steps: u32, bins_per_octave: u32) -> f64 {
    2f64.powf(n_steps as f64 / bins_per_octave as f64)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor()
}

/// Stretches `x` in time by `factor` (> 1 lengthens) without changing pitch.
fn time_stretch(x: &[f64], factor: f64, fft_size: usize, hop: usize) -> Vec<f64> {
    let n = fft_size;
    let half = n / 2;
    let bins = half + 1;
    let window = hann(n);

    // Centered framing: pad half a window on both sides.
    let mut padded = vec![0.0f64; x.len() + n];
    padded[half..half + x.len()].copy_from_slice(x);
    let n_frames = 1 + (padded.len() - n) / hop;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut spec: Vec<Vec<Complex64>> = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for f in 0..n_frames {
        let start = f * hop;
        for i in 0..n {
            buf[i] = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fwd.process(&mut buf);
        spec.push(buf[..bins].to_vec());
    }

    let step = 1.0 / factor;
    let n_out = (n_frames as f64 / step).ceil() as usize;
    let expected_advance: Vec<f64> = (0..bins).map(|k| 2.0 * PI * k as f64 * hop as f64 / n as f64).collect();
    let mut phase: Vec<f64> = spec[0].iter().map(|c| c.arg()).collect();
    let zero = vec![Complex64::new(0.0, 0.0); bins];

    let out_len = n + hop * (n_out.saturating_sub(1));
    let mut out = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    for t in 0..n_out {
        let pos = t as f64 * step;
        let i0 = pos.floor() as usize;
        if i0 >= n_frames {
            break;
        }
        let alpha = pos - i0 as f64;
        let a = &spec[i0];
        let b = spec.get(i0 + 1).unwrap_or(&zero);
        for k in 0..bins {
            let mag = (1.0 - alpha) * a[k].norm() + alpha * b[k].norm();
            buf[k] = Complex64::from_polar(mag, phase[k]);
            let dphi = b[k].arg() - a[k].arg() - expected_advance[k];
            phase[k] += expected_advance[k] + wrap_phase(dphi);
        }
        // Hermitian completion for a real inverse.
        buf[0].im = 0.0;
        buf[half].im = 0.0;
        for k in 1..half {
            buf[n - k] = buf[k].conj();
        }
        inv.process(&mut buf);
        let start = t * hop;
        for i in 0..n {
            out[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, w) in out.iter_mut().zip(&norm) {
        if *w > 1e-8 {
            *o /= w;
        }
    }
    let target = (x.len() as f64 * factor).round() as usize;
    let mut y: Vec<f64> = out.into_iter().skip(half).collect();
    y.resize(target, 0.0);
    y
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Reads `s` at positions m·rate for m in 0..len.
fn resample(s: &[f64], rate: f64, len: usize, kind: Resampler) -> Vec<f64> {
    match kind {
        Resampler::Linear => (0..len)
            .map(|m| {
                let t = m as f64 * rate;
                let i = t.floor() as usize;
                let frac = t - i as f64;
                let a = s.get(i).copied().unwrap_or(0.0);
                let b = s.get(i + 1).copied().unwrap_or(0.0);
                a + frac * (b - a)
            })
            .collect(),
        Resampler::WindowedSinc => {
            // Anti-aliasing cutoff at the output Nyquist when reading faster than 1:1.
            let cutoff = (1.0 / rate).min(1.0);
            let reach = SINC_HALF_WIDTH / cutoff;
            (0..len)
                .map(|m| {
                    let t = m as f64 * rate;
                    let lo = (t - reach).ceil().max(0.0) as usize;
                    let hi = ((t + reach).floor() as usize).min(s.len().saturating_sub(1));
                    let mut acc = 0.0;
                    for (k, &sk) in s.iter().enumerate().take(hi + 1).skip(lo) {
                        let d = t - k as f64;
                        let w = 0.5 + 0.5 * (PI * d / reach).cos();
                        acc += sk * cutoff * sinc(cutoff * d) * w;
                    }
                    acc
                })
                .collect()
        }
    }
}

/// Raises pitch by `n_steps` of `bins_per_octave` while preserving length.
pub fn pitch_shift(x: &[f32], n_steps: u32, p: &PitchShiftParams) -> Vec<f32> {
    if x.is_empty() {
        return Vec::new();
    }
    let r = pitch_ratio(n_steps, p.bins_per_octave);
    let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let stretched = time_stretch(&input, r, p.fft_size, p.hop);
    resample(&stretched, r, x.len(), p.resampler)
        .into_iter()
        .map(|v| v as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_strictly_sub_semitone() {
        let semitone = 2f64.powf(1.0 / 12.0);
        for n in 1..=5 {
            let r = pitch_ratio(n, 72);
            assert!(r > 1.0 && r < semitone);
        }
        assert!((pitch_ratio(6, 72) - semitone).abs() < 1e-12);
    }

    #[test]
    fn unit_stretch_reconstructs_signal() {
        let x: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.05).sin() * 0.5).collect();
        let y = time_stretch(&x, 1.0, 2048, 512);
        assert_eq!(y.len(), x.len());
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "max err {err}");
    }

    #[test]
    fn stretch_lengthens_output() {
        let x = vec![0.1f64; 10000];
        let y = time_stretch(&x, 1.05, 2048, 512);
        assert_eq!(y.len(), 10500);
    }

    #[test]
    fn resamplers_agree_on_smooth_signal() {
        let s: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.01).sin()).collect();
        let a = resample(&s, 1.02, 3000, Resampler::Linear);
        let b = resample(&s, 1.02, 3000, Resampler::WindowedSinc);
        for m in 100..2900 {
            let truth = (m as f64 * 1.02 * 0.01).sin();
            assert!((a[m] - truth).abs() < 1e-4);
            assert!((b[m] - truth).abs() < 1e-3, "sinc at {m}: {} vs {truth}", b[m]);
        }
    }
}
