use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestRow};
use crate::audio_io::load_wav;
use crate::effects::splitmix64;
use crate::error::{Error, Result};
use crate::features::{read_features, write_features, FeatureExtractor, LogMelSpectrogram, N_FRAMES, N_MELS};
use crate::nn::Tensor;

/// Block-averaging applied to the 80 × 247 features before training.
/// `(1, 1)` keeps the full resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputGeometry {
    pub mel_pool: usize,
    pub time_pool: usize,
}

impl Default for InputGeometry {
    fn default() -> Self {
        Self::FULL
    }
}

impl InputGeometry {
    pub const FULL: InputGeometry = InputGeometry {
        mel_pool: 1,
        time_pool: 1,
    };

    /// `(n_mels, n_frames)` after pooling.
    pub fn dims(&self) -> (usize, usize) {
        (N_MELS / self.mel_pool.max(1), N_FRAMES / self.time_pool.max(1))
    }
}

/// Feature planes held in memory, one per example, row-major `n_mels × n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n_mels: usize,
    pub n_frames: usize,
    pub data: Vec<f32>,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
}

impl FeatureSet {
    pub fn empty(n_mels: usize, n_frames: usize) -> Self {
        Self {
            n_mels,
            n_frames,
            data: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.n_mels * self.n_frames
    }

    pub fn example(&self, i: usize) -> &[f32] {
        &self.data[i * self.plane()..(i + 1) * self.plane()]
    }

    pub fn push(&mut self, id: String, label: u8, spec: &LogMelSpectrogram) -> Result<()> {
        if (spec.n_mels, spec.n_frames) != (self.n_mels, self.n_frames) {
            return Err(Error::Shape(format!(
                "{id}: features are {}x{}, expected {}x{}",
                spec.n_mels, spec.n_frames, self.n_mels, self.n_frames
            )));
        }
        self.data.extend_from_slice(&spec.values);
        self.labels.push(label);
        self.ids.push(id);
        Ok(())
    }

    /// Examples of `self` followed by those of `other`.
    pub fn concat(&self, other: &FeatureSet) -> Result<FeatureSet> {
        if (self.n_mels, self.n_frames) != (other.n_mels, other.n_frames) {
            return Err(Error::Shape("cannot join feature sets of different geometry".into()));
        }
        let mut out = self.clone();
        out.data.extend_from_slice(&other.data);
        out.labels.extend_from_slice(&other.labels);
        out.ids.extend(other.ids.iter().cloned());
        Ok(out)
    }

    /// Inputs `[batch, 1, n_mels, n_frames]` and labels for the given examples.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<u8>) {
        let mut data = Vec::with_capacity(indices.len() * self.plane());
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        let t = Tensor::from_vec(&[indices.len(), 1, self.n_mels, self.n_frames], data).expect("sized");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Batches for one pass; see [`batch_indices`].
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64, mode: BatchMode) -> Vec<(Tensor<f32>, Vec<u8>)> {
        batch_indices(self.len(), batch_size, seed, epoch, mode)
            .iter()
            .map(|idx| self.gather(idx))
            .collect()
    }
}

fn load_row(row: &ManifestRow, extractor: &FeatureExtractor, geometry: InputGeometry) -> Result<LogMelSpectrogram> {
    let is_lmel = row.path.extension().is_some_and(|e| e.eq_ignore_ascii_case("lmel"));
    let spec = if is_lmel {
        let (spec, label) = read_features(&row.path)?;
        if let Some(l) = label {
            if l != row.label {
                return Err(Error::Data(format!(
                    "{}: feature file label {l} disagrees with manifest label {}",
                    row.example_id, row.label
                )));
            }
        }
        spec
    } else {
        extractor.log_mel(&load_wav(&row.path)?)?
    };
    Ok(spec.downsample(geometry.mel_pool, geometry.time_pool))
}

/// Loads features for every row: `.lmel` files are read directly, anything
/// else is treated as audio and featurized. Rows are processed in parallel
/// and stored in manifest order.
pub fn load_feature_set(manifest: &DatasetManifest, geometry: InputGeometry) -> Result<FeatureSet> {
    let extractor = FeatureExtractor::new();
    let specs: Vec<Result<LogMelSpectrogram>> = manifest
        .rows
        .par_iter()
        .map(|row| load_row(row, &extractor, geometry))
        .collect();
    let (n_mels, n_frames) = geometry.dims();
    let mut set = FeatureSet::empty(n_mels, n_frames);
    for (row, spec) in manifest.rows.iter().zip(specs) {
        set.push(row.example_id.clone(), row.label, &spec?)?;
    }
    Ok(set)
}

fn feature_path(out_dir: &Path, row: &ManifestRow) -> PathBuf {
    let safe: String = row
        .example_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    match row.effect {
        Some(kind) => out_dir.join(format!("{safe}__{}.lmel", kind.id())),
        None => out_dir.join(format!("{safe}.lmel")),
    }
}

/// Writes full-resolution features for every audio row into `out_dir` and
/// returns the manifest pointing at them.
pub fn featurize_manifest(manifest: &DatasetManifest, out_dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let extractor = FeatureExtractor::new();
    let rows: Vec<Result<ManifestRow>> = manifest
        .rows
        .par_iter()
        .map(|row| {
            let spec = extractor.log_mel(&load_wav(&row.path)?)?;
            let path = feature_path(out_dir, row);
            write_features(&path, &spec, Some(row.label))?;
            Ok(ManifestRow { path, ..row.clone() })
        })
        .collect();
    Ok(DatasetManifest::new(rows.into_iter().collect::<Result<_>>()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Shuffled by (seed, epoch); a final batch smaller than 2 is dropped.
    Train,
    /// Manifest order; every example kept.
    Eval,
}

/// Index batches over `n` examples.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64, mode: BatchMode) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    if mode == BatchMode::Train {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ splitmix64(epoch.wrapping_add(0x6570_6f63)));
        order.shuffle(&mut rng);
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if mode == BatchMode::Train && batches.last().is_some_and(|b| b.len() < 2) {
        batches.pop();
    }
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::{save_wav, AudioClip};
    use crate::pipeline::manifest::Split;
    use proptest::prelude::*;

    #[test]
    fn hundred_rows_make_two_batches() {
        let b = batch_indices(100, 50, 1, 0, BatchMode::Train);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![50, 50]);
    }

    #[test]
    fn singleton_tail_dropped_only_in_training() {
        let train = batch_indices(101, 50, 1, 0, BatchMode::Train);
        assert_eq!(train.len(), 2);
        assert_eq!(train.iter().map(Vec::len).sum::<usize>(), 100);
        let eval = batch_indices(101, 50, 1, 0, BatchMode::Eval);
        assert_eq!(eval.len(), 3);
        assert_eq!(eval[2], vec![100]);
    }

    #[test]
    fn order_depends_on_seed_and_epoch() {
        let a = batch_indices(60, 50, 3, 1, BatchMode::Train);
        assert_eq!(a, batch_indices(60, 50, 3, 1, BatchMode::Train));
        assert_ne!(a, batch_indices(60, 50, 3, 2, BatchMode::Train));
        assert_ne!(a, batch_indices(60, 50, 4, 1, BatchMode::Train));
    }

    proptest! {
        #[test]
        fn batches_partition_examples(n in 0usize..300, bs in 2usize..64, seed: u64, epoch in 0u64..50) {
            let batches = batch_indices(n, bs, seed, epoch, BatchMode::Train);
            let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
            prop_assert!(batches.iter().all(|b| b.len() >= 2 && b.len() <= bs));
            seen.sort_unstable();
            seen.dedup();
            let total: usize = batches.iter().map(Vec::len).sum();
            prop_assert_eq!(seen.len(), total);
            prop_assert!(n - total <= 1);
        }
    }

    #[test]
    fn geometry_dims() {
        assert_eq!(InputGeometry::FULL.dims(), (80, 247));
        assert_eq!(
            InputGeometry {
                mel_pool: 2,
                time_pool: 8
            }
            .dims(),
            (40, 30)
        );
    }

    #[test]
    fn featurized_manifest_loads_like_audio() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<f32> = (0..64000).map(|i| (i as f32 * 0.05).sin() * 0.5).collect();
        let wav = dir.path().join("a.wav");
        save_wav(&AudioClip::new(samples, 16000), &wav).unwrap();
        let manifest = DatasetManifest::new(vec![ManifestRow {
            example_id: "a".into(),
            path: wav,
            label: 4,
            split: Split::Train,
            effect: None,
        }]);
        let geometry = InputGeometry {
            mel_pool: 2,
            time_pool: 4,
        };
        let from_audio = load_feature_set(&manifest, geometry).unwrap();
        let lmel = featurize_manifest(&manifest, &dir.path().join("feat")).unwrap();
        assert!(lmel.rows[0].path.ends_with("a.lmel"));
        let from_file = load_feature_set(&lmel, geometry).unwrap();
        assert_eq!(from_audio, from_file);
        assert_eq!((from_file.n_mels, from_file.n_frames), (40, 61));
    }
}
