use std::path::{Path, PathBuf};

use fxclass::effects::{augment_dataset, EffectKind, Variant};
use fxclass::features::{N_FRAMES, N_MELS};
use fxclass::nn::gradcheck::{run_all, GradcheckReport, TOLERANCE};
use fxclass::nn::{load_checkpoint, save_checkpoint, Checkpoint, ModelParams};
use fxclass::pipeline::{
    evaluate, experiment_grid, featurize_manifest, load_feature_set, train, write_report, DatasetManifest,
    ExperimentConfig, ExperimentReport, InputGeometry, Split,
};
use fxclass::Error;
use serde_json::{json, Value};

use crate::config::Settings;
use crate::toy::{toygen, ToySpec};
use crate::CliError;

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn gradcheck(seed: u64) -> Result<GradcheckReport, CliError> {
    Ok(run_all(seed)?)
}

/// Prints one line per checked layer; fails unless every error is below tolerance.
pub fn gradcheck_command(seed: u64, out: Option<&Path>) -> Result<Value, CliError> {
    let report = gradcheck(seed)?;
    for e in &report.entries {
        let verdict = if e.max_rel_error < TOLERANCE { "ok" } else { "FAIL" };
        println!("{:<32} {:>10.3e}  ({} values)  {verdict}", e.name, e.max_rel_error, e.checked);
    }
    let summary = json!({
        "tolerance": TOLERANCE,
        "max_rel_error": report.max_rel_error(),
        "layers": report.entries.iter().map(|e| json!({
            "name": e.name, "max_rel_error": e.max_rel_error, "checked": e.checked
        })).collect::<Vec<_>>(),
    });
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("gradcheck.json"), &summary)?;
    }
    if report.passed() {
        Ok(summary)
    } else {
        Err(CliError::GradcheckFailed(report.max_rel_error()))
    }
}

pub fn toygen_command(spec: &ToySpec, out: &Path) -> Result<Value, CliError> {
    let manifest = toygen(spec, out)?;
    Ok(json!({
        "manifest": "manifest.csv",
        "train": manifest.split(Split::Train).len(),
        "valid": manifest.split(Split::Valid).len(),
        "test": manifest.split(Split::Test).len(),
    }))
}

pub fn augment_command(
    manifest_path: &Path,
    kind: EffectKind,
    split: Split,
    variant: Option<Variant>,
    seed: u64,
    out: &Path,
) -> Result<Value, CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let outcome = augment_dataset(&manifest, kind, split, variant, &out.join("audio"), seed)?;
    outcome.manifest.save(out.join("manifest.csv"))?;
    let failures: Vec<Value> = outcome
        .failures
        .iter()
        .map(|f| json!({"example_id": f.example_id, "error": f.error.to_string()}))
        .collect();
    for f in &outcome.failures {
        eprintln!("{}: {}", f.example_id, f.error);
    }
    Ok(json!({
        "effect": kind.id(),
        "split": split.as_str(),
        "processed": outcome.manifest.len(),
        "failures": failures,
    }))
}

pub fn featurize_command(manifest_path: &Path, out: &Path) -> Result<Value, CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let featurized = featurize_manifest(&manifest, &out.join("features"))?;
    featurized.save(out.join("manifest.csv"))?;
    Ok(json!({"features": featurized.len(), "manifest": "manifest.csv"}))
}

pub fn train_command(train_manifest: &Path, valid_manifest: &Path, settings: &Settings, out: &Path) -> Result<Value, CliError> {
    let cfg = ExperimentConfig {
        train: settings.train_config()?,
        geometry: settings.geometry()?,
    };
    let train_set = load_feature_set(&DatasetManifest::load(train_manifest)?, cfg.geometry)?;
    let valid_set = load_feature_set(&DatasetManifest::load(valid_manifest)?, cfg.geometry)?;
    create_dir(out)?;
    let params = ModelParams::<f32>::init(cfg.model_config(), cfg.train.seed)?;
    match train(params, &train_set, &valid_set, &cfg.train) {
        Ok(outcome) => {
            let ck = Checkpoint {
                params: outcome.params.clone(),
                adam: None,
                epoch: outcome.best_epoch as u64,
            };
            save_checkpoint(&out.join("model.fxck"), &ck)?;
            let train_metrics = evaluate(&outcome.params, &train_set)?;
            let summary = json!({
                "checkpoint": "model.fxck",
                "geometry": cfg.geometry,
                "parameter_count": outcome.params.parameter_count(),
                "best_epoch": outcome.best_epoch,
                "best_valid_accuracy": outcome.best_valid_accuracy,
                "train_accuracy": train_metrics.accuracy,
                "stopped_early": outcome.stopped_early,
                "history": outcome.history,
            });
            write_json(&out.join("metrics.json"), &summary)?;
            Ok(summary)
        }
        Err(failure) => {
            if let Some(last_good) = failure.last_good {
                let ck = Checkpoint {
                    params: last_good,
                    adam: None,
                    epoch: 0,
                };
                save_checkpoint(&out.join("last_good.fxck"), &ck)?;
            }
            write_json(&out.join("metrics.json"), &json!({"history": failure.history}))?;
            Err(failure.error.into())
        }
    }
}

/// Smallest pools mapping the full 80 × 247 features onto `(n_mels, n_frames)`.
pub fn geometry_for(n_mels: usize, n_frames: usize) -> Result<InputGeometry, CliError> {
    let pool = |full: usize, n: usize| (1..=full).find(|p| full / p == n);
    match (pool(N_MELS, n_mels), pool(N_FRAMES, n_frames)) {
        (Some(mel_pool), Some(time_pool)) => Ok(InputGeometry { mel_pool, time_pool }),
        _ => Err(Error::Shape(format!("no pooling maps 80x247 onto {n_mels}x{n_frames}")).into()),
    }
}

pub fn evaluate_command(checkpoint: &Path, manifest_path: &Path, out: &Path) -> Result<Value, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let cfg = &ck.params.config;
    let geometry = geometry_for(cfg.n_mels, cfg.n_frames)?;
    let set = load_feature_set(&DatasetManifest::load(manifest_path)?, geometry)?;
    let metrics = evaluate(&ck.params, &set)?;
    create_dir(out)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    println!("accuracy {:.4} ({}/{})", metrics.accuracy, metrics.correct, metrics.n);
    Ok(serde_json::to_value(&metrics).map_err(|e| Error::Data(e.to_string()))?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentSource {
    /// Generate the toy dataset under the output directory first.
    Toy,
    /// Directory with `manifest.csv`, or with `train.csv`, `valid.csv` and `test.csv`.
    Manifests(PathBuf),
}

fn load_source_manifests(dir: &Path) -> Result<DatasetManifest, CliError> {
    let all = dir.join("manifest.csv");
    if all.is_file() {
        return Ok(DatasetManifest::load(all)?);
    }
    let mut m = DatasetManifest::default();
    for split in Split::ALL {
        m = m.appended(&DatasetManifest::load(dir.join(format!("{}.csv", split.as_str())))?);
    }
    Ok(m)
}

pub fn run_experiment(
    source: &ExperimentSource,
    effects: &[EffectKind],
    settings: &Settings,
    out: &Path,
) -> Result<ExperimentReport, CliError> {
    let train_cfg = settings.train_config()?;
    let (manifest, geometry) = match source {
        ExperimentSource::Toy => (toygen(&settings.toy_spec()?, &out.join("toy_data"))?, settings.toy_geometry()?),
        ExperimentSource::Manifests(dir) => (load_source_manifests(dir)?, settings.geometry()?),
    };
    let cfg = ExperimentConfig {
        train: train_cfg,
        geometry,
    };
    let report = experiment_grid(&manifest, effects, out, &cfg)?;
    write_report(&report, out)?;
    Ok(report)
}

pub fn experiment_command(
    source: &ExperimentSource,
    effects: &[EffectKind],
    settings: &Settings,
    out: &Path,
) -> Result<Value, CliError> {
    let report = run_experiment(source, effects, settings, out)?;
    let header: Vec<&str> = report.test_sets.iter().map(String::as_str).collect();
    println!("{:<14} {}", "train \\ test", header.join(" "));
    for (name, row) in report.train_sets.iter().zip(&report.accuracy) {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map_or_else(|| "failed".into(), |a| format!("{a:.3}")))
            .collect();
        println!("{name:<14} {}", cells.join(" "));
    }
    Ok(json!({
        "report": "report.json",
        "tables": ["table1.csv", "table2.csv"],
        "failed_models": report.models.iter().filter(|m| m.status != "ok").count(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_inverse() {
        assert_eq!(geometry_for(80, 247).unwrap(), InputGeometry::FULL);
        assert_eq!(
            geometry_for(40, 30).unwrap(),
            InputGeometry {
                mel_pool: 2,
                time_pool: 8
            }
        );
        assert!(geometry_for(81, 247).is_err());
    }
}
