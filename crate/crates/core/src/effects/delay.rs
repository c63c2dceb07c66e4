use std::f64::consts::PI;

use super::{ChorusParams, EchoParams, FlangerParams};

/// Echo delay in whole samples, rounded to nearest.
pub fn echo_delay_samples(delay_ms: f64, fs: f64) -> usize {
    (delay_ms * fs / 1000.0).round() as usize
}

/// Linear-interpolated read of `buf` at fractional position `t`; zero outside.
#[inline]
fn read_frac(buf: &[f64], t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let i = t.floor() as usize;
    let frac = t - i as f64;
    let a = buf.get(i).copied().unwrap_or(0.0);
    if frac == 0.0 {
        return a;
    }
    let b = buf.get(i + 1).copied().unwrap_or(0.0);
    a + frac * (b - a)
}

/// Feedback delay: w[n] = x[n-D] + g·w[n-D], y = dry·x + wet·w.
pub fn echo(x: &[f32], fs: f64, p: &EchoParams) -> Vec<f32> {
    let d = echo_delay_samples(p.delay_ms, fs);
    let mut w = vec![0.0f64; x.len()];
    for n in d..x.len() {
        w[n] = x[n - d] as f64 + p.feedback * w[n - d];
    }
    x.iter()
        .zip(&w)
        .map(|(&xn, &wn)| (p.dry * xn as f64 + p.wet * wn) as f32)
        .collect()
}

/// LFO-modulated short delay with optional feedback around the delay line.
pub fn flanger(x: &[f32], fs: f64, p: &FlangerParams) -> Vec<f32> {
    let base = p.base_delay_ms * fs / 1000.0;
    let depth = p.depth_ms * fs / 1000.0;
    let omega = 2.0 * PI * p.lfo_hz / fs;
    // Line input s[n] = x[n] + fb·v[n]; a delay below one sample would read s[n]
    // before it exists, so the feedback path clamps to one sample.
    let min_delay = if p.feedback != 0.0 { 1.0 } else { 0.0 };
    let mut line = vec![0.0f64; x.len()];
    let mut y = Vec::with_capacity(x.len());
    for n in 0..x.len() {
        let xn = x[n] as f64;
        let d = (base + depth * (omega * n as f64).sin()).max(min_delay);
        let t = n as f64 - d;
        let v = if d == 0.0 {
            xn
        } else if p.feedback == 0.0 {
            read_frac_f32(x, t)
        } else {
            read_frac(&line[..n], t)
        };
        line[n] = xn + p.feedback * v;
        y.push((p.dry * xn + p.wet * v) as f32);
    }
    y
}

#[inline]
fn read_frac_f32(x: &[f32], t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let i = t.floor() as usize;
    let frac = t - i as f64;
    let a = x.get(i).copied().unwrap_or(0.0) as f64;
    if frac == 0.0 {
        return a;
    }
    let b = x.get(i + 1).copied().unwrap_or(0.0) as f64;
    a + frac * (b - a)
}

/// Several modulated delayed voices without feedback:
/// y = dry·x + (wet/voices)·Σ voices.
pub fn chorus(x: &[f32], fs: f64, p: &ChorusParams) -> Vec<f32> {
    let n_voices = p.voices.len() as f64;
    let mut acc = vec![0.0f64; x.len()];
    for voice in &p.voices {
        let base = voice.base_delay_ms * fs / 1000.0;
        let depth = voice.depth_ms * fs / 1000.0;
        let omega = 2.0 * PI * voice.lfo_hz / fs;
        for (n, a) in acc.iter_mut().enumerate() {
            let d = base + depth * (omega * n as f64 + voice.lfo_phase).sin();
            *a += read_frac_f32(x, n as f64 - d);
        }
    }
    x.iter()
        .zip(&acc)
        .map(|(&xn, &v)| (p.dry * xn as f64 + p.wet / n_voices * v) as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(n: usize) -> Vec<f32> {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x
    }

    #[test]
    fn echo_delay_rounds_to_2907() {
        assert_eq!(echo_delay_samples(181.7, 16000.0), 2907);
    }

    #[test]
    fn echo_impulse_taps() {
        let p = EchoParams {
            delay_ms: 181.7,
            feedback: 0.5,
            wet: 1.0,
            dry: 1.0,
        };
        let y = echo(&impulse(12000), 16000.0, &p);
        for (n, amp) in [(0, 1.0), (2907, 1.0), (5814, 0.5), (8721, 0.25)] {
            assert!((y[n] - amp).abs() < 1e-6, "tap {n}: {}", y[n]);
        }
        let total: f32 = y.iter().map(|v| v.abs()).sum();
        assert!((total - 2.875).abs() < 1e-5);
    }

    #[test]
    fn static_flanger_is_two_tap_comb() {
        let p = FlangerParams {
            base_delay_ms: 1.0,
            depth_ms: 0.0,
            lfo_hz: 0.5,
            feedback: 0.0,
            wet: 1.0,
            dry: 1.0,
        };
        let y = flanger(&impulse(64), 16000.0, &p);
        assert_eq!(y[0], 1.0);
        assert_eq!(y[16], 1.0);
        assert!(y.iter().enumerate().all(|(i, &v)| i == 0 || i == 16 || v == 0.0));
    }

    #[test]
    fn flanger_feedback_recirculates() {
        let p = FlangerParams {
            base_delay_ms: 1.0,
            depth_ms: 0.0,
            lfo_hz: 0.0,
            feedback: 0.5,
            wet: 1.0,
            dry: 0.0,
        };
        let y = flanger(&impulse(64), 16000.0, &p);
        assert!((y[16] - 1.0).abs() < 1e-7);
        assert!((y[32] - 0.5).abs() < 1e-7);
        assert!((y[48] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn single_voice_chorus_delays_by_base() {
        let p = ChorusParams::evenly_phased(&[30.0], 0.0, 0.5, 1.0, 0.0);
        let y = chorus(&impulse(1000), 16000.0, &p);
        assert!((y[480] - 1.0).abs() < 1e-7);
        assert_eq!(y.iter().filter(|v| v.abs() > 0.0).count(), 1);
    }

    #[test]
    fn fractional_read_interpolates() {
        let buf = [0.0, 1.0, 3.0];
        assert_eq!(read_frac(&buf, 0.5), 0.5);
        assert_eq!(read_frac(&buf, 1.25), 1.5);
        assert_eq!(read_frac(&buf, -0.5), 0.0);
        assert_eq!(read_frac(&buf, 2.5), 1.5);
    }
}
