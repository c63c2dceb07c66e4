use std::path::Path;

use serde_json::Value;

use super::manifest::{family_label, DatasetManifest, ManifestRow, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub manifest: DatasetManifest,
    /// Note ids whose WAV file was not found.
    pub missing: Vec<String>,
}

/// Builds a manifest from an NSynth `examples.json` (note id → record with
/// `instrument_family_str`) and the directory holding `<id>.wav`.
/// Rows come out in sorted id order.
pub fn ingest_nsynth(examples_json: &Path, wav_dir: &Path, split: Split) -> Result<IngestOutcome> {
    let text = std::fs::read_to_string(examples_json).map_err(|e| Error::io(examples_json, e))?;
    let bad = |reason: String| Error::Format {
        path: examples_json.to_path_buf(),
        what: "examples JSON",
        reason,
    };
    let root: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let records = root.as_object().ok_or_else(|| bad("top level is not an object".into()))?;
    if records.is_empty() {
        log::warn!("{}: no examples", examples_json.display());
    }
    let mut ids: Vec<&String> = records.keys().collect();
    ids.sort();

    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for id in ids {
        let family = records[id]
            .get("instrument_family_str")
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("{id}: no instrument_family_str")))?;
        let label = family_label(family)
            .ok_or_else(|| Error::Data(format!("{id}: unknown instrument family {family:?}")))?;
        let path = wav_dir.join(format!("{id}.wav"));
        if !path.is_file() {
            log::warn!("{id}: {} not found, skipping", path.display());
            missing.push(id.clone());
            continue;
        }
        rows.push(ManifestRow {
            example_id: id.clone(),
            path,
            label,
            split,
            effect: None,
        });
    }
    Ok(IngestOutcome {
        manifest: DatasetManifest::new(rows),
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(json: &str, wavs: &[&str]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("examples.json"), json).unwrap();
        for w in wavs {
            std::fs::write(dir.path().join(format!("{w}.wav")), b"").unwrap();
        }
        dir
    }

    #[test]
    fn families_map_to_labels() {
        let dir = setup(
            r#"{"b_note": {"instrument_family_str": "synth_lead"}, "a_note": {"instrument_family_str": "guitar"}}"#,
            &["a_note", "b_note"],
        );
        let out = ingest_nsynth(&dir.path().join("examples.json"), dir.path(), Split::Test).unwrap();
        let labels: Vec<(String, u8)> = out.manifest.rows.iter().map(|r| (r.example_id.clone(), r.label)).collect();
        assert_eq!(labels, vec![("a_note".into(), 3), ("b_note".into(), 9)]);
        assert!(out.manifest.rows.iter().all(|r| r.split == Split::Test));
    }

    #[test]
    fn missing_wav_is_skipped_and_reported() {
        let dir = setup(
            r#"{"a": {"instrument_family_str": "bass"}, "b": {"instrument_family_str": "reed"}}"#,
            &["a"],
        );
        let out = ingest_nsynth(&dir.path().join("examples.json"), dir.path(), Split::Train).unwrap();
        assert_eq!(out.manifest.len(), 1);
        assert_eq!(out.missing, vec!["b".to_string()]);
    }

    #[test]
    fn unknown_family_is_an_error() {
        let dir = setup(r#"{"a": {"instrument_family_str": "kazoo"}}"#, &["a"]);
        assert!(matches!(
            ingest_nsynth(&dir.path().join("examples.json"), dir.path(), Split::Train),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn empty_json_gives_empty_manifest() {
        let dir = setup("{}", &[]);
        let out = ingest_nsynth(&dir.path().join("examples.json"), dir.path(), Split::Valid).unwrap();
        assert!(out.manifest.is_empty());
    }
}
