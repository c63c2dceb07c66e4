//! Native re-implementations of the seven augmentation effects.
//!
//! Each effect kind has two parameterizations: variant A is applied to the
//! training split and variant B to the validation and test splits, so that
//! models never see the exact processing they are evaluated on.
//!
//! | kind        | variant A                              | variant B                               |
//! |-------------|----------------------------------------|-----------------------------------------|
//! | distortion  | bitcrush, 8 bits, hold 4               | overdrive+comp, drive 5, clip 0.4, ×1.5 |
//! | saturation  | tanh, k = 2                            | cubic, drive 1.5                        |
//! | reverb      | Schroeder, rt60 2.0 s ("plate")        | Schroeder, rt60 0.5 s ("small room")    |
//! | echo        | 181.7 ms, feedback 0.5                 | 250 ms, feedback 0.4                    |
//! | flanger     | 3 ± 2 ms, 0.5 Hz, feedback 0.3         | 5 ± 3 ms, 0.25 Hz, feedback 0.2         |
//! | chorus      | 3 voices at 25/30/35 ms, 0.3 Hz        | 1 voice at 30 ms, 0.5 Hz                |
//! | pitch_shift | 72 bins/oct, 1..=5 steps, linear interp| 72 bins/oct, 1..=5 steps, sinc interp   |

mod augment;
mod delay;
mod distortion;
mod pitch;
mod reverb;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::{fix_length_in_place, AudioClip, CLIP_SECONDS, DATASET_SAMPLE_RATE};
use crate::error::{Error, Result};

pub use augment::{augment_dataset, variant_for_split, AugmentFailure, AugmentOutcome};
pub use delay::{chorus, echo, echo_delay_samples, flanger};
pub use distortion::{bitcrush, overdrive_comp, saturate_cubic, saturate_tanh};
pub use pitch::{pitch_ratio, pitch_shift, Resampler};
pub use reverb::{comb_gain, reverb};

/// The seven augmentation effects, in the row order used by the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Distortion,
    Saturation,
    Reverb,
    Chorus,
    Echo,
    Flanger,
    PitchShift,
}

impl EffectKind {
    pub const ALL: [EffectKind; 7] = [
        EffectKind::Distortion,
        EffectKind::Saturation,
        EffectKind::Reverb,
        EffectKind::Chorus,
        EffectKind::Echo,
        EffectKind::Flanger,
        EffectKind::PitchShift,
    ];

    pub fn id(self) -> &'static str {
        match self {
            EffectKind::Distortion => "distortion",
            EffectKind::Saturation => "saturation",
            EffectKind::Reverb => "reverb",
            EffectKind::Chorus => "chorus",
            EffectKind::Echo => "echo",
            EffectKind::Flanger => "flanger",
            EffectKind::PitchShift => "pitch_shift",
        }
    }

    /// Human-readable label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            EffectKind::Distortion => "Heavy distortion",
            EffectKind::Saturation => "Saturation",
            EffectKind::Reverb => "Reverb",
            EffectKind::Chorus => "Chorus",
            EffectKind::Echo => "Echo",
            EffectKind::Flanger => "Flanger",
            EffectKind::PitchShift => "Pitch Shifting",
        }
    }
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EffectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "distortion" | "bitcrush_distortion" | "heavy_distortion" => Ok(EffectKind::Distortion),
            "saturation" => Ok(EffectKind::Saturation),
            "reverb" => Ok(EffectKind::Reverb),
            "chorus" => Ok(EffectKind::Chorus),
            "echo" => Ok(EffectKind::Echo),
            "flanger" => Ok(EffectKind::Flanger),
            "pitch_shift" | "pitch" => Ok(EffectKind::PitchShift),
            other => Err(Error::InvalidArgument(format!("unknown effect kind {other:?}"))),
        }
    }
}

/// Which parameterization of an effect to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Training split.
    A,
    /// Validation and test splits.
    B,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoParams {
    pub delay_ms: f64,
    pub feedback: f64,
    pub wet: f64,
    pub dry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlangerParams {
    pub base_delay_ms: f64,
    pub depth_ms: f64,
    pub lfo_hz: f64,
    pub feedback: f64,
    pub wet: f64,
    pub dry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChorusVoice {
    pub base_delay_ms: f64,
    pub depth_ms: f64,
    pub lfo_hz: f64,
    /// Radians.
    pub lfo_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChorusParams {
    pub voices: Vec<ChorusVoice>,
    pub wet: f64,
    pub dry: f64,
}

impl ChorusParams {
    /// Voices sharing depth and rate, with LFO phase 2π·v/voices for voice v.
    pub fn evenly_phased(base_delays_ms: &[f64], depth_ms: f64, lfo_hz: f64, wet: f64, dry: f64) -> Self {
        let n = base_delays_ms.len().max(1) as f64;
        let voices = base_delays_ms
            .iter()
            .enumerate()
            .map(|(v, &base_delay_ms)| ChorusVoice {
                base_delay_ms,
                depth_ms,
                lfo_hz,
                lfo_phase: 2.0 * std::f64::consts::PI * v as f64 / n,
            })
            .collect();
        Self { voices, wet, dry }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverbParams {
    pub comb_delays_ms: [f64; 4],
    pub allpass_delays_ms: [f64; 2],
    pub rt60_s: f64,
    pub wet: f64,
    pub dry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitcrushParams {
    pub bit_depth: u32,
    pub rate_divisor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverdriveCompParams {
    pub drive: f64,
    pub clip_threshold: f64,
    pub makeup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhSaturationParams {
    pub drive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSaturationParams {
    pub drive: f64,
    pub makeup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchShiftParams {
    pub bins_per_octave: u32,
    /// Fixed step count; `None` draws one from 1..=5 using the config seed.
    pub n_steps: Option<u32>,
    pub fft_size: usize,
    pub hop: usize,
    pub resampler: Resampler,
}

/// Kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EffectParams {
    Echo(EchoParams),
    Flanger(FlangerParams),
    Chorus(ChorusParams),
    Reverb(ReverbParams),
    Bitcrush(BitcrushParams),
    OverdriveComp(OverdriveCompParams),
    TanhSaturation(TanhSaturationParams),
    CubicSaturation(CubicSaturationParams),
    PitchShift(PitchShiftParams),
}

impl EffectParams {
    fn kind(&self) -> EffectKind {
        match self {
            EffectParams::Echo(_) => EffectKind::Echo,
            EffectParams::Flanger(_) => EffectKind::Flanger,
            EffectParams::Chorus(_) => EffectKind::Chorus,
            EffectParams::Reverb(_) => EffectKind::Reverb,
            EffectParams::Bitcrush(_) | EffectParams::OverdriveComp(_) => EffectKind::Distortion,
            EffectParams::TanhSaturation(_) | EffectParams::CubicSaturation(_) => EffectKind::Saturation,
            EffectParams::PitchShift(_) => EffectKind::PitchShift,
        }
    }
}

/// A fully specified effect application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectConfig {
    pub kind: EffectKind,
    pub variant: Variant,
    pub params: EffectParams,
    /// Only consumed by the pitch-shift step draw.
    pub seed: u64,
}

pub const REVERB_COMB_DELAYS_MS: [f64; 4] = [29.7, 37.1, 41.1, 43.7];
pub const REVERB_ALLPASS_DELAYS_MS: [f64; 2] = [5.0, 1.7];
pub const ALLPASS_GAIN: f64 = 0.7;
pub const PITCH_BINS_PER_OCTAVE: u32 = 72;
pub const PITCH_MAX_STEPS: u32 = 5;

impl EffectConfig {
    /// The documented default parameterization for `kind` and `variant`.
    pub fn default_for(kind: EffectKind, variant: Variant, seed: u64) -> Self {
        use Variant::{A, B};
        let params = match (kind, variant) {
            (EffectKind::Echo, A) => EffectParams::Echo(EchoParams {
                delay_ms: 181.7,
                feedback: 0.5,
                wet: 0.7,
                dry: 1.0,
            }),
            (EffectKind::Echo, B) => EffectParams::Echo(EchoParams {
                delay_ms: 250.0,
                feedback: 0.4,
                wet: 0.7,
                dry: 1.0,
            }),
            (EffectKind::Flanger, A) => EffectParams::Flanger(FlangerParams {
                base_delay_ms: 3.0,
                depth_ms: 2.0,
                lfo_hz: 0.5,
                feedback: 0.3,
                wet: 0.7,
                dry: 1.0,
            }),
            (EffectKind::Flanger, B) => EffectParams::Flanger(FlangerParams {
                base_delay_ms: 5.0,
                depth_ms: 3.0,
                lfo_hz: 0.25,
                feedback: 0.2,
                wet: 0.7,
                dry: 1.0,
            }),
            (EffectKind::Chorus, A) => {
                EffectParams::Chorus(ChorusParams::evenly_phased(&[25.0, 30.0, 35.0], 2.0, 0.3, 0.7, 1.0))
            }
            (EffectKind::Chorus, B) => {
                EffectParams::Chorus(ChorusParams::evenly_phased(&[30.0], 3.0, 0.5, 0.7, 1.0))
            }
            (EffectKind::Reverb, v) => EffectParams::Reverb(ReverbParams {
                comb_delays_ms: REVERB_COMB_DELAYS_MS,
                allpass_delays_ms: REVERB_ALLPASS_DELAYS_MS,
                rt60_s: if v == A { 2.0 } else { 0.5 },
                wet: 0.3,
                dry: 1.0,
            }),
            (EffectKind::Distortion, A) => EffectParams::Bitcrush(BitcrushParams {
                bit_depth: 8,
                rate_divisor: 4,
            }),
            (EffectKind::Distortion, B) => EffectParams::OverdriveComp(OverdriveCompParams {
                drive: 5.0,
                clip_threshold: 0.4,
                makeup: 1.5,
            }),
            (EffectKind::Saturation, A) => EffectParams::TanhSaturation(TanhSaturationParams { drive: 2.0 }),
            (EffectKind::Saturation, B) => EffectParams::CubicSaturation(CubicSaturationParams {
                drive: 1.5,
                makeup: 1.0,
            }),
            (EffectKind::PitchShift, v) => EffectParams::PitchShift(PitchShiftParams {
                bins_per_octave: PITCH_BINS_PER_OCTAVE,
                n_steps: None,
                fft_size: 2048,
                hop: 512,
                resampler: if v == A { Resampler::Linear } else { Resampler::WindowedSinc },
            }),
        };
        Self {
            kind,
            variant,
            params,
            seed,
        }
    }

    /// Checks every parameter invariant; `apply_effect` calls this first.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEffect(msg));
        if self.params.kind() != self.kind {
            return bad(format!("{} parameters supplied for kind {}", self.params.kind(), self.kind));
        }
        let finite_gain = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidEffect(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        match &self.params {
            EffectParams::Echo(p) => {
                finite_gain("wet", p.wet)?;
                finite_gain("dry", p.dry)?;
                if !(p.delay_ms > 50.0 && p.delay_ms.is_finite()) {
                    return bad(format!("echo delay must exceed 50 ms, got {}", p.delay_ms));
                }
                if !(0.0..1.0).contains(&p.feedback) {
                    return bad(format!("echo feedback must lie in [0, 1), got {}", p.feedback));
                }
            }
            EffectParams::Flanger(p) => {
                finite_gain("wet", p.wet)?;
                finite_gain("dry", p.dry)?;
                if !(p.base_delay_ms > 0.0 && p.depth_ms >= 0.0 && p.lfo_hz >= 0.0) {
                    return bad("flanger times must be positive".into());
                }
                if p.base_delay_ms - p.depth_ms < 0.0 {
                    return bad("flanger depth exceeds base delay".into());
                }
                if p.base_delay_ms + p.depth_ms >= 15.0 {
                    return bad(format!(
                        "flanger maximum delay {} ms is not below 15 ms",
                        p.base_delay_ms + p.depth_ms
                    ));
                }
                if !(0.0..1.0).contains(&p.feedback) {
                    return bad(format!("flanger feedback must lie in [0, 1), got {}", p.feedback));
                }
            }
            EffectParams::Chorus(p) => {
                finite_gain("wet", p.wet)?;
                finite_gain("dry", p.dry)?;
                if p.voices.is_empty() {
                    return bad("chorus needs at least one voice".into());
                }
                for v in &p.voices {
                    if !(v.base_delay_ms > 0.0 && v.depth_ms >= 0.0 && v.lfo_hz >= 0.0) {
                        return bad("chorus times must be positive".into());
                    }
                    if v.base_delay_ms - v.depth_ms < 1.0 {
                        return bad("chorus voice delay must stay above 1 ms".into());
                    }
                }
            }
            EffectParams::Reverb(p) => {
                finite_gain("wet", p.wet)?;
                finite_gain("dry", p.dry)?;
                if !(p.rt60_s > 0.0 && p.rt60_s.is_finite()) {
                    return bad(format!("rt60 must be positive, got {}", p.rt60_s));
                }
                if p.comb_delays_ms.iter().chain(&p.allpass_delays_ms).any(|&d| !(d > 0.0)) {
                    return bad("reverb delays must be positive".into());
                }
                for &d in &p.comb_delays_ms {
                    let g = comb_gain(d / 1000.0, p.rt60_s);
                    if !(g > 0.0 && g < 1.0) {
                        return bad(format!("comb gain {g} for {d} ms is outside (0, 1)"));
                    }
                }
            }
            EffectParams::Bitcrush(p) => {
                if !(1..=16).contains(&p.bit_depth) {
                    return bad(format!("bit depth must lie in 1..=16, got {}", p.bit_depth));
                }
                if p.rate_divisor < 1 {
                    return bad("rate divisor must be at least 1".into());
                }
            }
            EffectParams::OverdriveComp(p) => {
                if !(p.drive >= 1.0 && p.drive.is_finite()) {
                    return bad(format!("overdrive drive must be >= 1, got {}", p.drive));
                }
                if !(p.clip_threshold > 0.0 && p.clip_threshold <= 1.0) {
                    return bad(format!("clip threshold must lie in (0, 1], got {}", p.clip_threshold));
                }
                finite_gain("makeup", p.makeup)?;
            }
            EffectParams::TanhSaturation(p) => {
                if !(p.drive > 0.0 && p.drive.is_finite()) {
                    return bad(format!("saturation drive must be positive, got {}", p.drive));
                }
            }
            EffectParams::CubicSaturation(p) => {
                if !(p.drive > 0.0 && p.drive.is_finite()) {
                    return bad(format!("saturation drive must be positive, got {}", p.drive));
                }
                finite_gain("makeup", p.makeup)?;
            }
            EffectParams::PitchShift(p) => {
                if p.bins_per_octave < 12 {
                    return bad("bins per octave must be at least 12".into());
                }
                if let Some(n) = p.n_steps {
                    let r = pitch_ratio(n, p.bins_per_octave);
                    if !(r > 1.0 && r < 2f64.powf(1.0 / 12.0)) {
                        return bad(format!("{n} steps is not strictly between 0 and one semitone"));
                    }
                }
                if !p.fft_size.is_power_of_two() || p.hop == 0 || p.hop > p.fft_size / 2 {
                    return bad("pitch shift needs a power-of-two FFT and hop <= fft/2".into());
                }
            }
        }
        Ok(())
    }
}

/// Step count drawn uniformly from 1..=5 for a given per-clip seed.
pub fn draw_pitch_steps(seed: u64) -> u32 {
    ChaCha8Rng::seed_from_u64(seed).gen_range(1..=PITCH_MAX_STEPS)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable per-clip seed so that processing order never changes output.
pub fn clip_seed(seed: u64, example_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in example_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Runs the configured effect on `samples` without the length or rate contract.
pub fn process(samples: &[f32], sample_rate: u32, cfg: &EffectConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let fs = sample_rate as f64;
    Ok(match &cfg.params {
        EffectParams::Echo(p) => echo(samples, fs, p),
        EffectParams::Flanger(p) => flanger(samples, fs, p),
        EffectParams::Chorus(p) => chorus(samples, fs, p),
        EffectParams::Reverb(p) => reverb(samples, fs, p),
        EffectParams::Bitcrush(p) => bitcrush(samples, p),
        EffectParams::OverdriveComp(p) => overdrive_comp(samples, p),
        EffectParams::TanhSaturation(p) => saturate_tanh(samples, p),
        EffectParams::CubicSaturation(p) => saturate_cubic(samples, p),
        EffectParams::PitchShift(p) => {
            let steps = p.n_steps.unwrap_or_else(|| draw_pitch_steps(cfg.seed));
            pitch_shift(samples, steps, p)
        }
    })
}

/// Applies an effect to a dataset-rate clip and trims/pads the result to 4 s.
pub fn apply_effect(clip: &AudioClip, cfg: &EffectConfig) -> Result<AudioClip> {
    if clip.sample_rate != DATASET_SAMPLE_RATE {
        return Err(Error::InvalidArgument(format!(
            "effects expect {DATASET_SAMPLE_RATE} Hz audio, got {} Hz",
            clip.sample_rate
        )));
    }
    let mut out = AudioClip::new(process(&clip.samples, clip.sample_rate, cfg)?, clip.sample_rate);
    fix_length_in_place(&mut out, CLIP_SECONDS);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in EffectKind::ALL {
            for variant in [Variant::A, Variant::B] {
                EffectConfig::default_for(kind, variant, 1).validate().unwrap();
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = EffectConfig::default_for(EffectKind::Echo, Variant::A, 0);
        if let EffectParams::Echo(p) = &mut cfg.params {
            p.delay_ms = 40.0;
        }
        assert!(cfg.validate().is_err());

        let mut cfg = EffectConfig::default_for(EffectKind::Flanger, Variant::A, 0);
        if let EffectParams::Flanger(p) = &mut cfg.params {
            p.base_delay_ms = 10.0;
            p.depth_ms = 5.0;
        }
        assert!(cfg.validate().is_err());

        let mut cfg = EffectConfig::default_for(EffectKind::Echo, Variant::A, 0);
        if let EffectParams::Echo(p) = &mut cfg.params {
            p.feedback = 1.0;
        }
        assert!(cfg.validate().is_err());

        let mut cfg = EffectConfig::default_for(EffectKind::PitchShift, Variant::A, 0);
        if let EffectParams::PitchShift(p) = &mut cfg.params {
            p.n_steps = Some(6);
        }
        assert!(cfg.validate().is_err());

        let mut cfg = EffectConfig::default_for(EffectKind::Distortion, Variant::A, 0);
        cfg.params = EffectParams::Bitcrush(BitcrushParams {
            bit_depth: 17,
            rate_divisor: 1,
        });
        assert!(cfg.validate().is_err());

        let mut cfg = EffectConfig::default_for(EffectKind::Echo, Variant::A, 0);
        cfg.kind = EffectKind::Reverb;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let clip = AudioClip::new(vec![0.0; 100], 44100);
        let cfg = EffectConfig::default_for(EffectKind::Echo, Variant::A, 0);
        assert!(apply_effect(&clip, &cfg).is_err());
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in EffectKind::ALL {
            assert_eq!(kind.id().parse::<EffectKind>().unwrap(), kind);
        }
        assert_eq!("bitcrush_distortion".parse::<EffectKind>().unwrap(), EffectKind::Distortion);
        assert!("wah".parse::<EffectKind>().is_err());
    }

    #[test]
    fn clip_seed_depends_on_both_inputs() {
        assert_eq!(clip_seed(7, "a"), clip_seed(7, "a"));
        assert_ne!(clip_seed(7, "a"), clip_seed(8, "a"));
        assert_ne!(clip_seed(7, "a"), clip_seed(7, "b"));
    }
}
