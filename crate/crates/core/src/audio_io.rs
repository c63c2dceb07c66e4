//! WAV reading/writing and the fixed-length clip contract.
//!
//! Every downstream stage assumes mono clips of exactly four seconds at the
//! dataset rate. `load_wav` accepts 16-bit PCM and 32-bit float files (mixing
//! multi-channel files down by the arithmetic mean); `save_wav` always writes
//! 16-bit PCM mono.

use std::path::Path;

use crate::error::{Error, Result};

/// Rate of every clip in the dataset.
pub const DATASET_SAMPLE_RATE: u32 = 16_000;
/// Duration every clip is trimmed or padded to.
pub const CLIP_SECONDS: f64 = 4.0;

const PCM16_SCALE: f32 = 32768.0;

/// A mono buffer of float samples with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(reason) => Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        },
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "unsupported WAV format".into(),
        },
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: err.to_string(),
        },
        other => Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Reads a PCM16 or float32 WAV file, mixing channels down by their mean.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "zero channels".into(),
        });
    }
    if spec.sample_rate == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "zero sample rate".into(),
        });
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {format:?} samples"),
            })
        }
    };

    let channels = spec.channels as usize;
    let samples: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    if samples.is_empty() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "no sample data".into(),
        });
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes the clip as 16-bit PCM mono, clamping to [-1, 1] before quantizing.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(i) = clip.samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            tensor: format!("audio sample {i} written to {}", path.display()),
        });
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * PCM16_SCALE)
            .round()
            .clamp(i16::MIN as f32, i16::MAX as f32) as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Number of samples in a clip of `seconds` at `sample_rate`.
pub fn target_len(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Truncates at the tail or zero-pads at the tail to exactly `seconds`.
pub fn fix_length(clip: &AudioClip, seconds: f64) -> AudioClip {
    let n = target_len(seconds, clip.sample_rate);
    let mut samples = clip.samples.clone();
    samples.resize(n, 0.0);
    AudioClip::new(samples, clip.sample_rate)
}

/// In-place variant of [`fix_length`].
pub fn fix_length_in_place(clip: &mut AudioClip, seconds: f64) {
    let n = target_len(seconds, clip.sample_rate);
    clip.samples.resize(n, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: hound::WavSpec, write: impl FnOnce(&mut hound::WavWriter<std::io::BufWriter<std::fs::File>>)) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        write(&mut w);
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_raw(&path, spec, |w| w.write_sample(16384i16).unwrap());
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
        assert_eq!(clip.sample_rate, 16000);
    }

    #[test]
    fn stereo_is_mean_downmixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        write_raw(&path, spec, |w| {
            w.write_sample(1.0f32).unwrap();
            w.write_sample(0.0f32).unwrap();
        });
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
    }

    #[test]
    fn four_second_file_has_64000_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("note.wav");
        let clip = AudioClip::new(vec![0.1; 64000], 16000);
        save_wav(&clip, &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.len(), 64000);
        assert_eq!(back.sample_rate, 16000);
    }

    #[test]
    fn errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.wav");
        assert!(matches!(load_wav(&missing), Err(Error::MissingFile { .. })));

        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"this is not a riff file at all").unwrap();
        assert!(matches!(load_wav(&garbage), Err(Error::MalformedHeader { .. })));

        let pcm8 = dir.path().join("pcm8.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        write_raw(&pcm8, spec, |w| w.write_sample(3i8).unwrap());
        match load_wav(&pcm8) {
            Err(Error::UnsupportedEncoding { path, .. }) => assert_eq!(path, pcm8),
            other => panic!("expected unsupported encoding, got {other:?}"),
        }
    }

    #[test]
    fn save_clamps_and_zero_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        save_wav(&AudioClip::new(vec![0.0, 0.0], 16000), &path).unwrap();
        assert_eq!(load_wav(&path).unwrap().samples, vec![0.0, 0.0]);

        save_wav(&AudioClip::new(vec![2.0, -3.0], 16000), &path).unwrap();
        let back = load_wav(&path).unwrap().samples;
        assert!((back[0] - 1.0).abs() <= 1.0 / 32768.0);
        assert_eq!(back[1], -1.0);
    }

    #[test]
    fn save_rejects_nan_and_unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let clip = AudioClip::new(vec![f32::NAN], 16000);
        assert!(save_wav(&clip, dir.path().join("x.wav")).is_err());
        let ok = AudioClip::new(vec![0.0], 16000);
        assert!(save_wav(&ok, dir.path().join("no/such/dir/x.wav")).is_err());
    }

    #[test]
    fn fix_length_cases() {
        let long = AudioClip::new((0..70000).map(|i| i as f32).collect(), 16000);
        let out = fix_length(&long, 4.0);
        assert_eq!(out.len(), 64000);
        assert_eq!(&out.samples[..], &long.samples[..64000]);

        let exact = AudioClip::new(vec![0.25; 64000], 16000);
        assert_eq!(fix_length(&exact, 4.0), exact);

        let short = AudioClip::new(vec![0.5; 60000], 16000);
        let out = fix_length(&short, 4.0);
        assert_eq!(out.len(), 64000);
        assert!(out.samples[60000..].iter().all(|&s| s == 0.0));
        assert_eq!(out.sample_rate, 16000);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn round_trip_within_one_step(samples in prop::collection::vec(-1.5f32..1.5, 1..400)) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("rt.wav");
                let clip = AudioClip::new(samples, 16000);
                save_wav(&clip, &path).unwrap();
                let back = load_wav(&path).unwrap();
                prop_assert_eq!(back.len(), clip.len());
                for (a, b) in clip.samples.iter().zip(&back.samples) {
                    prop_assert!((a.clamp(-1.0, 1.0) - b).abs() <= 1.0 / 32768.0);
                }
            }

            #[test]
            fn fix_length_idempotent(len in 1usize..5000, rate in 100u32..2000, secs in 0.1f64..3.0) {
                let clip = AudioClip::new((0..len).map(|i| (i as f32 * 0.37).sin()).collect(), rate);
                let once = fix_length(&clip, secs);
                let twice = fix_length(&once, secs);
                prop_assert_eq!(&once, &twice);
                prop_assert_eq!(once.sample_rate, rate);
                prop_assert_eq!(once.len(), target_len(secs, rate));
            }
        }
    }
}
