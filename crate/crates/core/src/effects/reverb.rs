//! Schroeder reverberator: four parallel feedback combs into two series allpasses.

use super::{ReverbParams, ALLPASS_GAIN};

/// Comb feedback gain giving a 60 dB decay after `rt60_s` for a loop of `delay_s`.
pub fn comb_gain(delay_s: f64, rt60_s: f64) -> f64 {
    10f64.powf(-3.0 * delay_s / rt60_s)
}

fn delay_samples(ms: f64, fs: f64) -> usize {
    ((ms * fs / 1000.0).round() as usize).max(1)
}

fn feedback_comb(x: &[f64], d: usize, g: f64, out: &mut [f64]) {
    let mut c = vec![0.0f64; x.len()];
    for n in d..x.len() {
        c[n] = x[n - d] + g * c[n - d];
    }
    for (o, v) in out.iter_mut().zip(&c) {
        *o += v;
    }
}

fn allpass(x: &[f64], m: usize, g: f64) -> Vec<f64> {
    let mut y = vec![0.0f64; x.len()];
    for n in 0..x.len() {
        let delayed = if n >= m { x[n - m] + g * y[n - m] } else { 0.0 };
        y[n] = -g * x[n] + delayed;
    }
    y
}

pub fn reverb(x: &[f32], fs: f64, p: &ReverbParams) -> Vec<f32> {
    let input: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut wet = vec![0.0f64; x.len()];
    for &ms in &p.comb_delays_ms {
        let d = delay_samples(ms, fs);
        let g = comb_gain(d as f64 / fs, p.rt60_s);
        feedback_comb(&input, d, g, &mut wet);
    }
    let scale = 1.0 / p.comb_delays_ms.len() as f64;
    wet.iter_mut().for_each(|v| *v *= scale);
    for &ms in &p.allpass_delays_ms {
        wet = allpass(&wet, delay_samples(ms, fs), ALLPASS_GAIN);
    }
    input
        .iter()
        .zip(&wet)
        .map(|(&xn, &wn)| (p.dry * xn + p.wet * wn) as f32)
        .collect()
}
