//! Synthetic 11-class stand-in dataset.
//!
//! Each class has its own synthesis recipe, listed in label order:
//!
//! | label | recipe |
//! |---|---|
//! | 0 | pure sine, slow decay |
//! | 1 | odd harmonics at 1/k (square-like) |
//! | 2 | all harmonics at 1/k (saw-like) |
//! | 3 | Karplus-Strong plucked string |
//! | 4 | white-noise burst with fast decay |
//! | 5 | inharmonic bell partials |
//! | 6 | octave organ: f0, 2f0, 4f0, 8f0, no decay |
//! | 7 | FM pair, modulator at 1.4·f0, index 3 |
//! | 8 | noise through a narrow resonator at 4·f0 |
//! | 9 | narrow pulse train (duty 0.1) |
//! | 10 | harmonics shaped by two vowel formants |
//!
//! Per example the fundamental is log-uniform over the class register (a
//! sub-range of 80–1000 Hz, like an instrument's playing range), the peak
//! amplitude uniform in 0.3–0.9 and the decay time drawn from a class range.
//! Notes sound for 3 s with a 10 ms attack and a 50 ms release.

use std::f64::consts::PI;
use std::path::Path;

use fxclass::audio_io::{save_wav, AudioClip, DATASET_SAMPLE_RATE};
use fxclass::effects::clip_seed;
use fxclass::pipeline::{DatasetManifest, ManifestRow, Split};
use fxclass::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const TOY_CLASSES: usize = 11;
const FS: f64 = DATASET_SAMPLE_RATE as f64;
const CLIP_LEN: usize = 64_000;
const NOTE_LEN: usize = 48_000;
const MAX_PARTIAL_HZ: f64 = 7_500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToySpec {
    pub per_class_train: usize,
    pub per_class_valid: usize,
    pub per_class_test: usize,
    pub seed: u64,
}

impl ToySpec {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.per_class_train,
            Split::Valid => self.per_class_valid,
            Split::Test => self.per_class_test,
        }
    }
}

/// Fundamental range (Hz) per class.
const REGISTER: [(f64, f64); TOY_CLASSES] = [
    (80.0, 250.0),
    (250.0, 800.0),
    (80.0, 250.0),
    (150.0, 500.0),
    (80.0, 1000.0),
    (300.0, 1000.0),
    (80.0, 250.0),
    (150.0, 500.0),
    (150.0, 500.0),
    (300.0, 1000.0),
    (100.0, 300.0),
];

/// Decay time constant range (seconds) per class.
const DECAY_RANGE: [(f64, f64); TOY_CLASSES] = [
    (1.0, 3.0),
    (0.8, 2.0),
    (0.8, 2.0),
    (0.3, 0.8),
    (0.05, 0.2),
    (0.6, 1.5),
    (100.0, 100.0),
    (0.8, 2.0),
    (0.5, 1.5),
    (0.8, 2.0),
    (1.0, 3.0),
];

fn envelope(n: usize, tau: f64) -> f64 {
    let t = n as f64 / FS;
    let attack = (t / 0.01).min(1.0);
    let release_start = NOTE_LEN as f64 / FS;
    let release = if t < release_start {
        1.0
    } else {
        (1.0 - (t - release_start) / 0.05).max(0.0)
    };
    attack * release * (-t / tau).exp()
}

fn additive(f0: f64, partials: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
    let mut out = vec![0.0; NOTE_LEN + 800];
    for (ratio, amp) in partials {
        let f = f0 * ratio;
        if f >= MAX_PARTIAL_HZ {
            continue;
        }
        let w = 2.0 * PI * f / FS;
        for (n, v) in out.iter_mut().enumerate() {
            *v += amp * (w * n as f64).sin();
        }
    }
    out
}

fn harmonics(f0: f64, weight: impl Fn(usize) -> f64) -> Vec<f64> {
    let k_max = (MAX_PARTIAL_HZ / f0) as usize;
    additive(f0, (1..=k_max).map(|k| (k as f64, weight(k))))
}

fn karplus_strong(f0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = (FS / f0).round().max(2.0) as usize;
    let mut line: Vec<f64> = (0..period).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(NOTE_LEN + 800);
    let mut i = 0;
    for _ in 0..NOTE_LEN + 800 {
        let next = (i + 1) % period;
        let v = line[i];
        line[i] = 0.996 * 0.5 * (line[i] + line[next]);
        out.push(v);
        i = next;
    }
    out
}

fn resonant_noise(center: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Two-pole resonator with a 3 % bandwidth.
    let r = (-PI * 0.03 * center / FS).exp();
    let (a1, a2) = (2.0 * r * (2.0 * PI * center / FS).cos(), -r * r);
    let (mut y1, mut y2) = (0.0, 0.0);
    (0..NOTE_LEN + 800)
        .map(|_| {
            let y = rng.gen_range(-1.0..1.0) + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn formant_gain(f: f64) -> f64 {
    let peak = |fc: f64, bw: f64| 1.0 / (1.0 + ((f - fc) / bw).powi(2));
    0.05 + peak(700.0, 90.0) + 0.7 * peak(1_200.0, 110.0)
}

/// Raw (unnormalized) note for `class` at fundamental `f0`.
fn note(class: usize, f0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match class {
        0 => additive(f0, std::iter::once((1.0, 1.0))),
        1 => harmonics(f0, |k| if k % 2 == 1 { 1.0 / k as f64 } else { 0.0 }),
        2 => harmonics(f0, |k| 1.0 / k as f64),
        3 => karplus_strong(f0, rng),
        4 => (0..NOTE_LEN + 800).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        5 => additive(f0, [(1.0, 1.0), (2.76, 0.6), (5.40, 0.4), (8.93, 0.25)].into_iter()),
        6 => additive(f0, [(1.0, 1.0), (2.0, 1.0), (4.0, 1.0), (8.0, 1.0)].into_iter()),
        7 => {
            let (wc, wm) = (2.0 * PI * f0 / FS, 2.0 * PI * 1.4 * f0 / FS);
            (0..NOTE_LEN + 800)
                .map(|n| (wc * n as f64 + 3.0 * (wm * n as f64).sin()).sin())
                .collect()
        }
        8 => resonant_noise((4.0 * f0).min(MAX_PARTIAL_HZ), rng),
        9 => harmonics(f0, |k| {
            let x = PI * 0.1 * k as f64;
            x.sin() / x
        }),
        10 => harmonics(f0, |k| formant_gain(k as f64 * f0)),
        _ => unreachable!("class index below {TOY_CLASSES}"),
    }
}

/// Synthesizes one 4 s example; fully determined by `(class, seed)`.
pub fn synthesize(class: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (flo, fhi) = REGISTER[class];
    let f0 = (flo.ln() + rng.gen::<f64>() * (fhi.ln() - flo.ln())).exp();
    let amp = rng.gen_range(0.3..=0.9);
    let (lo, hi) = DECAY_RANGE[class];
    let tau = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let raw = note(class, f0, &mut rng);
    let shaped: Vec<f64> = raw.iter().enumerate().map(|(n, &v)| v * envelope(n, tau)).collect();
    let peak = shaped.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut out = vec![0.0f32; CLIP_LEN];
    for (o, v) in out.iter_mut().zip(&shaped) {
        *o = (amp * v / peak) as f32;
    }
    out
}

pub fn example_id(split: Split, class: usize, index: usize) -> String {
    format!("toy_{}_{class:02}_{index:03}", split.as_str())
}

struct Job {
    id: String,
    class: usize,
    split: Split,
}

fn jobs(spec: &ToySpec) -> Vec<Job> {
    let mut out = Vec::new();
    for split in Split::ALL {
        for class in 0..TOY_CLASSES {
            for index in 0..spec.count(split) {
                out.push(Job {
                    id: example_id(split, class, index),
                    class,
                    split,
                });
            }
        }
    }
    out
}

/// In-memory clips in manifest order: (id, label, split, samples).
pub fn toy_clips(spec: &ToySpec) -> Vec<(String, u8, Split, Vec<f32>)> {
    jobs(spec)
        .into_par_iter()
        .map(|j| {
            let samples = synthesize(j.class, clip_seed(spec.seed, &j.id));
            (j.id, j.class as u8, j.split, samples)
        })
        .collect()
}

/// Writes `<split>/<id>.wav` files plus `manifest.csv` (all splits) and one
/// CSV per split into `out_dir`.
pub fn toygen(spec: &ToySpec, out_dir: &Path) -> Result<DatasetManifest> {
    for split in Split::ALL {
        let dir = out_dir.join(split.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    }
    let rows: Vec<Result<ManifestRow>> = jobs(spec)
        .into_par_iter()
        .map(|j| {
            let path = out_dir.join(j.split.as_str()).join(format!("{}.wav", j.id));
            let samples = synthesize(j.class, clip_seed(spec.seed, &j.id));
            save_wav(&AudioClip::new(samples, DATASET_SAMPLE_RATE), &path)?;
            Ok(ManifestRow {
                example_id: j.id,
                path,
                label: j.class as u8,
                split: j.split,
                effect: None,
            })
        })
        .collect();
    let manifest = DatasetManifest::new(rows.into_iter().collect::<Result<_>>()?);
    manifest.save(out_dir.join("manifest.csv"))?;
    for split in Split::ALL {
        manifest.split(split).save(out_dir.join(format!("{}.csv", split.as_str())))?;
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_class_is_bounded_and_nonsilent() {
        for class in 0..TOY_CLASSES {
            let x = synthesize(class, 17 + class as u64);
            assert_eq!(x.len(), CLIP_LEN);
            let peak = x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert!((0.3..=0.9001).contains(&peak), "class {class}: peak {peak}");
            assert!(x[NOTE_LEN + 1000..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        assert_eq!(synthesize(7, 5), synthesize(7, 5));
        assert_ne!(synthesize(7, 5), synthesize(7, 6));
    }

    #[test]
    fn counts_per_split() {
        let spec = ToySpec {
            per_class_train: 2,
            per_class_valid: 1,
            per_class_test: 1,
            seed: 0,
        };
        let j = jobs(&spec);
        assert_eq!(j.len(), 44);
        assert_eq!(j.iter().filter(|j| j.split == Split::Train).count(), 22);
    }
}
