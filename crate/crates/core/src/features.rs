//! Log-mel spectrogram extraction and the `LMEL` feature file format.
//!
//! Pipeline: uncentered 1024-point Hann STFT with hop 256 (75 % overlap),
//! magnitude (power 1), 80 peak-normalized HTK-mel triangles spanning
//! 40–7600 Hz, then `ln(max(x, 1e-10))`. A four second clip at 16 kHz gives
//! exactly 80 × 247 values.
//!
//! `LMEL` layout (little-endian): magic `b"LMEL"`, `u32` version (1), `u32`
//! n_mels, `u32` n_frames, `u32` label (`0xFFFF_FFFF` when unlabeled), then
//! n_mels × n_frames `f32` values, mel-major.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio_io::{AudioClip, DATASET_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const FFT_SIZE: usize = 1024;
pub const HOP: usize = 256;
pub const N_MELS: usize = 80;
pub const MEL_LO_HZ: f64 = 40.0;
pub const MEL_HI_HZ: f64 = 7600.0;
pub const LOG_FLOOR: f64 = 1e-10;
/// Frames produced by a 64000-sample clip.
pub const N_FRAMES: usize = 247;

const LMEL_MAGIC: &[u8; 4] = b"LMEL";
const LMEL_VERSION: u32 = 1;
const UNLABELED: u32 = 0xFFFF_FFFF;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// STFT magnitudes, stored bin-major (`bins × frames`).
#[derive(Debug, Clone, PartialEq)]
pub struct Magnitudes {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl Magnitudes {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.frames + frame]
    }
}

/// Short-time Fourier transform magnitude without centering or padding.
pub struct Stft {
    fft_size: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(fft_size: usize, hop: usize) -> Self {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
        Self {
            fft_size,
            hop,
            window: hann_window(fft_size),
            fft,
        }
    }

    pub fn n_frames(&self, len: usize) -> Option<usize> {
        (len >= self.fft_size).then(|| (len - self.fft_size) / self.hop + 1)
    }

    pub fn magnitudes(&self, samples: &[f32]) -> Result<Magnitudes> {
        let frames = self.n_frames(samples.len()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "clip of {} samples is shorter than the {}-point FFT",
                samples.len(),
                self.fft_size
            ))
        })?;
        let bins = self.fft_size / 2 + 1;
        let mut data = vec![0.0f64; bins * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_size];
        for f in 0..frames {
            let start = f * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(samples[start + i] as f64 * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, c) in buf.iter().take(bins).enumerate() {
                data[k * frames + f] = c.norm();
            }
        }
        Ok(Magnitudes { bins, frames, data })
    }
}

/// STFT magnitude (`fft_size/2+1` bins × frames) of an uncentered Hann STFT.
pub fn stft_magnitude(clip: &AudioClip, fft_size: usize, hop: usize) -> Result<Magnitudes> {
    Stft::new(fft_size, hop).magnitudes(&clip.samples)
}

/// Triangular mel filters, `n_mels × n_bins`, each peaking at exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    /// n_mels + 2 edge/center frequencies in Hz.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }
}

pub fn mel_filterbank(n_mels: usize, f_lo: f64, f_hi: f64, fft_size: usize, fs: f64) -> Result<MelFilterbank> {
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= fs / 2.0) || n_mels == 0 {
        return Err(Error::InvalidArgument(format!(
            "mel range {f_lo}..{f_hi} Hz with {n_mels} bands is invalid at {fs} Hz"
        )));
    }
    let n_bins = fft_size / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    let step = (m_hi - m_lo) / (n_mels + 1) as f64;
    let edges_hz: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(m_lo + step * i as f64)).collect();
    let bin_hz = fs / fft_size as f64;

    let mut weights = vec![0.0f64; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
        }
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mel band {m} ({lo:.1}-{hi:.1} Hz) falls between FFT bins"
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        edges_hz,
    })
}

/// Log-mel energies, mel-major (`n_mels × n_frames`).
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub n_mels: usize,
    pub n_frames: usize,
    pub values: Vec<f32>,
}

impl LogMelSpectrogram {
    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.values[mel * self.n_frames + frame]
    }

    /// Block-averages `mel_factor × time_factor` cells, dropping remainders.
    pub fn downsample(&self, mel_factor: usize, time_factor: usize) -> LogMelSpectrogram {
        let (mf, tf) = (mel_factor.max(1), time_factor.max(1));
        if mf == 1 && tf == 1 {
            return self.clone();
        }
        let n_mels = self.n_mels / mf;
        let n_frames = self.n_frames / tf;
        let scale = 1.0 / (mf * tf) as f64;
        let mut values = Vec::with_capacity(n_mels * n_frames);
        for m in 0..n_mels {
            for t in 0..n_frames {
                let mut acc = 0.0f64;
                for dm in 0..mf {
                    let row = &self.values[(m * mf + dm) * self.n_frames..];
                    acc += row[t * tf..(t + 1) * tf].iter().map(|&v| v as f64).sum::<f64>();
                }
                values.push((acc * scale) as f32);
            }
        }
        LogMelSpectrogram {
            n_mels,
            n_frames,
            values,
        }
    }
}

/// Reusable extractor holding the FFT plan and filterbank.
pub struct FeatureExtractor {
    stft: Stft,
    filterbank: MelFilterbank,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureExtractor {
    pub fn new() -> Self {
        let filterbank = mel_filterbank(N_MELS, MEL_LO_HZ, MEL_HI_HZ, FFT_SIZE, DATASET_SAMPLE_RATE as f64)
            .expect("default mel configuration is valid");
        Self {
            stft: Stft::new(FFT_SIZE, HOP),
            filterbank,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn log_mel(&self, clip: &AudioClip) -> Result<LogMelSpectrogram> {
        if clip.sample_rate != DATASET_SAMPLE_RATE {
            return Err(Error::InvalidArgument(format!(
                "features expect {DATASET_SAMPLE_RATE} Hz audio, got {} Hz",
                clip.sample_rate
            )));
        }
        let mags = self.stft.magnitudes(&clip.samples)?;
        let fb = &self.filterbank;
        let frames = mags.frames;
        let mut values = vec![0.0f32; fb.n_mels * frames];
        let mut acc = vec![0.0f64; frames];
        for m in 0..fb.n_mels {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, &w) in fb.row(m).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let row = &mags.data[k * frames..(k + 1) * frames];
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += w * v;
                }
            }
            for (t, &a) in acc.iter().enumerate() {
                values[m * frames + t] = a.max(LOG_FLOOR).ln() as f32;
            }
        }
        Ok(LogMelSpectrogram {
            n_mels: fb.n_mels,
            n_frames: frames,
            values,
        })
    }
}

/// Log-mel spectrogram of a 16 kHz clip with the default configuration.
pub fn log_mel(clip: &AudioClip) -> Result<LogMelSpectrogram> {
    FeatureExtractor::new().log_mel(clip)
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        what: "LMEL",
        reason: reason.into(),
    }
}

pub fn write_features(path: impl AsRef<Path>, spec: &LogMelSpectrogram, label: Option<u8>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(20 + 4 * spec.values.len());
    bytes.extend_from_slice(LMEL_MAGIC);
    bytes.extend_from_slice(&LMEL_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(spec.n_mels as u32).to_le_bytes());
    bytes.extend_from_slice(&(spec.n_frames as u32).to_le_bytes());
    bytes.extend_from_slice(&label.map_or(UNLABELED, u32::from).to_le_bytes());
    for v in &spec.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<(LogMelSpectrogram, Option<u8>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..4] != LMEL_MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(1) != LMEL_VERSION {
        return Err(format_err(path, format!("unsupported version {}", word(1))));
    }
    let (n_mels, n_frames, label) = (word(2) as usize, word(3) as usize, word(4));
    let expected = 20 + 4 * n_mels * n_frames;
    if bytes.len() != expected {
        return Err(format_err(path, format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let label = match label {
        UNLABELED => None,
        l if l <= u8::MAX as u32 => Some(l as u8),
        l => return Err(format_err(path, format!("label {l} out of range"))),
    };
    Ok((
        LogMelSpectrogram {
            n_mels,
            n_frames,
            values,
        },
        label,
    ))
}
