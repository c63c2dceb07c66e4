//! Memoryless waveshapers plus the sample-and-hold bitcrusher.

use super::{BitcrushParams, CubicSaturationParams, OverdriveCompParams, TanhSaturationParams};

/// y = tanh(k·x)/tanh(k); unit peak maps to unit peak.
pub fn saturate_tanh(x: &[f32], p: &TanhSaturationParams) -> Vec<f32> {
    let norm = p.drive.tanh();
    x.iter()
        .map(|&v| ((p.drive * v as f64).tanh() / norm) as f32)
        .collect()
}

fn cubic_soft_clip(u: f64) -> f64 {
    (1.5 * u - 0.5 * u * u * u).clamp(-1.0, 1.0)
}

/// u = clamp(drive·x), y = makeup·clamp(1.5u − 0.5u³).
pub fn saturate_cubic(x: &[f32], p: &CubicSaturationParams) -> Vec<f32> {
    x.iter()
        .map(|&v| {
            let u = (p.drive * v as f64).clamp(-1.0, 1.0);
            (p.makeup * cubic_soft_clip(u)) as f32
        })
        .collect()
}

/// Quantization levels either side of zero for a `bits`-bit signed grid.
fn levels(bits: u32) -> f64 {
    // One bit degenerates to the ternary {-1, 0, 1} grid of two bits.
    ((1u64 << (bits - 1)) as f64 - 1.0).max(1.0)
}

/// Zero-order hold every `rate_divisor` samples, then round to the bit grid.
pub fn bitcrush(x: &[f32], p: &BitcrushParams) -> Vec<f32> {
    let l = levels(p.bit_depth);
    let hold = p.rate_divisor.max(1);
    (0..x.len())
        .map(|n| {
            let held = x[n - n % hold] as f64;
            ((held * l).round() / l) as f32
        })
        .collect()
}

/// Overdrive into a cubic clipper at `clip_threshold`, then makeup gain.
///
/// The clipper flattens dynamics the way a fast limiter would: every input
/// above threshold/drive lands on the same output level.
pub fn overdrive_comp(x: &[f32], p: &OverdriveCompParams) -> Vec<f32> {
    let t = p.clip_threshold;
    x.iter()
        .map(|&v| {
            let u = (p.drive * v as f64 / t).clamp(-1.0, 1.0);
            (p.makeup * t * cubic_soft_clip(u)) as f32
        })
        .collect()
}
