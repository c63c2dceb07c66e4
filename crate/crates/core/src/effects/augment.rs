use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{apply_effect, clip_seed, EffectConfig, EffectKind, Variant};
use crate::audio_io::{load_wav, save_wav};
use crate::error::{Error, Result};
use crate::pipeline::manifest::{DatasetManifest, ManifestRow, Split};

/// A file that could not be processed; the rest of the run continues.
#[derive(Debug)]
pub struct AugmentFailure {
    pub example_id: String,
    pub error: Error,
}

#[derive(Debug)]
pub struct AugmentOutcome {
    pub manifest: DatasetManifest,
    pub failures: Vec<AugmentFailure>,
}

/// Default variant for a split: A for training, B for validation and test.
pub fn variant_for_split(split: Split) -> Variant {
    match split {
        Split::Train => Variant::A,
        Split::Valid | Split::Test => Variant::B,
    }
}

fn output_path(out_dir: &Path, row: &ManifestRow, kind: EffectKind) -> PathBuf {
    let safe: String = row
        .example_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    out_dir.join(format!("{safe}__{}.wav", kind.id()))
}

fn process_row(row: &ManifestRow, kind: EffectKind, variant: Variant, out_dir: &Path, seed: u64) -> Result<ManifestRow> {
    let clip = load_wav(&row.path)?;
    let cfg = EffectConfig::default_for(kind, variant, clip_seed(seed, &row.example_id));
    let processed = apply_effect(&clip, &cfg)?;
    let path = output_path(out_dir, row, kind);
    save_wav(&processed, &path)?;
    Ok(ManifestRow {
        example_id: row.example_id.clone(),
        path,
        label: row.label,
        split: row.split,
        effect: Some(kind),
    })
}

/// Processes every row of `split` with the effect and writes one WAV per input
/// into `out_dir`. `variant` defaults to [`variant_for_split`].
///
/// Rows are processed in parallel on the current rayon pool; the per-clip seed
/// is derived from `(seed, example_id)` so the output is independent of order.
pub fn augment_dataset(
    manifest: &DatasetManifest,
    kind: EffectKind,
    split: Split,
    variant: Option<Variant>,
    out_dir: &Path,
    seed: u64,
) -> Result<AugmentOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let variant = variant.unwrap_or_else(|| variant_for_split(split));
    let rows: Vec<&ManifestRow> = manifest.rows.iter().filter(|r| r.split == split).collect();
    let results: Vec<(String, Result<ManifestRow>)> = rows
        .par_iter()
        .map(|row| (row.example_id.clone(), process_row(row, kind, variant, out_dir, seed)))
        .collect();

    let mut out_rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (example_id, result) in results {
        match result {
            Ok(row) => out_rows.push(row),
            Err(error) => {
                log::warn!("{example_id}: {error}");
                failures.push(AugmentFailure { example_id, error });
            }
        }
    }
    Ok(AugmentOutcome {
        manifest: DatasetManifest::new(out_rows),
        failures,
    })
}
