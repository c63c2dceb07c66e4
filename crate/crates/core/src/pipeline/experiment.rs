//! Baseline plus one model per effect, each evaluated on the clean test set and
//! on every effect-processed test set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{load_feature_set, FeatureSet, InputGeometry};
use super::evaluate::evaluate;
use super::manifest::{DatasetManifest, Split};
use super::train::{train, EpochRecord, TrainConfig};
use crate::effects::{augment_dataset, EffectKind};
use crate::error::{Error, Result};
use crate::nn::{save_checkpoint, Checkpoint, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub geometry: InputGeometry,
}

impl ExperimentConfig {
    pub fn model_config(&self) -> ModelConfig {
        let (h, w) = self.geometry.dims();
        ModelConfig::single_layer_for(h, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// `"none"` for the baseline, otherwise the effect id.
    pub train_effect: String,
    pub status: String,
    pub train_examples: usize,
    pub best_epoch: Option<usize>,
    pub best_valid_accuracy: Option<f64>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub training_set: String,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub effect: String,
    pub baseline: Option<f64>,
    pub augmented: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Row keys of `accuracy`: `"none"` then the effect ids.
    pub train_sets: Vec<String>,
    /// Column keys of `accuracy`.
    pub test_sets: Vec<String>,
    /// `accuracy[train_set][test_set]`; `None` marks a failed cell.
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub models: Vec<ModelReport>,
    pub augment_failures: Vec<String>,
    pub table1: Vec<Table1Row>,
    pub table2: Vec<Table2Row>,
}

impl ExperimentReport {
    pub fn cell(&self, train_set: &str, test_set: &str) -> Option<f64> {
        let r = self.train_sets.iter().position(|s| s == train_set)?;
        let c = self.test_sets.iter().position(|s| s == test_set)?;
        self.accuracy[r][c]
    }
}

fn key(effect: Option<EffectKind>) -> String {
    effect.map_or_else(|| "none".to_string(), |k| k.id().to_string())
}

/// Augmented copies of one split, or the reason they could not be produced.
fn augmented_split(
    manifest: &DatasetManifest,
    kind: EffectKind,
    split: Split,
    out_dir: &Path,
    seed: u64,
    failures: &mut Vec<String>,
) -> Result<DatasetManifest> {
    let dir = out_dir.join("audio").join(kind.id()).join(split.as_str());
    let out = augment_dataset(manifest, kind, split, None, &dir, seed)?;
    for f in &out.failures {
        failures.push(format!("{}/{}/{}: {}", kind.id(), split.as_str(), f.example_id, f.error));
    }
    Ok(out.manifest)
}

struct EffectSets {
    train: FeatureSet,
    valid: FeatureSet,
    test: FeatureSet,
}

/// Trains a fresh model on `train` with early stopping on `valid`.
pub fn train_model(
    cfg: &ExperimentConfig,
    train_set: &FeatureSet,
    valid_set: &FeatureSet,
) -> std::result::Result<super::train::TrainOutcome, super::train::TrainFailure> {
    let params = ModelParams::<f32>::init(cfg.model_config(), cfg.train.seed).map_err(|error| super::train::TrainFailure {
        error,
        last_good: None,
        history: Vec::new(),
    })?;
    train(params, train_set, valid_set, &cfg.train)
}

/// Runs the grid on a manifest holding clean train, valid and test rows.
/// Augmented audio, per-model checkpoints and nothing else are written under
/// `out_dir`; the report itself is returned (see [`write_report`]).
pub fn experiment_grid(
    manifest: &DatasetManifest,
    effects: &[EffectKind],
    out_dir: &Path,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.train.validate()?;
    let clean = DatasetManifest::new(manifest.rows.iter().filter(|r| r.effect.is_none()).cloned().collect());
    for split in Split::ALL {
        if clean.split(split).is_empty() {
            return Err(Error::Data(format!("no clean {} examples", split.as_str())));
        }
    }
    let geometry = cfg.geometry;
    let clean_train = load_feature_set(&clean.split(Split::Train), geometry)?;
    let clean_valid = load_feature_set(&clean.split(Split::Valid), geometry)?;
    let clean_test = load_feature_set(&clean.split(Split::Test), geometry)?;

    let mut augment_failures = Vec::new();
    let mut effect_sets: Vec<Result<EffectSets>> = Vec::new();
    for &kind in effects {
        let mut load = |split: Split| -> Result<FeatureSet> {
            let m = augmented_split(&clean, kind, split, out_dir, cfg.train.seed, &mut augment_failures)?;
            load_feature_set(&m, geometry)
        };
        let sets = (|| {
            Ok(EffectSets {
                train: load(Split::Train)?,
                valid: load(Split::Valid)?,
                test: load(Split::Test)?,
            })
        })();
        if let Err(e) = &sets {
            log::error!("{}: augmentation failed: {e}", kind.id());
            augment_failures.push(format!("{}: {e}", kind.id()));
        }
        effect_sets.push(sets);
    }

    let mut train_sets = vec![key(None)];
    train_sets.extend(effects.iter().map(|&k| key(Some(k))));
    let test_sets = train_sets.clone();
    let mut test_features: Vec<Option<&FeatureSet>> = vec![Some(&clean_test)];
    test_features.extend(effect_sets.iter().map(|s| s.as_ref().ok().map(|s| &s.test)));

    let models_dir = out_dir.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    let mut accuracy = Vec::new();
    let mut models = Vec::new();
    for (row, name) in train_sets.iter().enumerate() {
        let data: Result<(FeatureSet, FeatureSet)> = if row == 0 {
            Ok((clean_train.clone(), clean_valid.clone()))
        } else {
            match &effect_sets[row - 1] {
                Ok(s) => clean_train
                    .concat(&s.train)
                    .and_then(|t| Ok((t, clean_valid.concat(&s.valid)?))),
                Err(e) => Err(Error::Data(format!("augmented data unavailable: {e}"))),
            }
        };
        let (train_set, valid_set) = match data {
            Ok(d) => d,
            Err(e) => {
                models.push(failed_model(name, 0, e.to_string(), Vec::new()));
                accuracy.push(vec![None; test_sets.len()]);
                continue;
            }
        };
        log::info!("training model on {name} ({} examples)", train_set.len());
        match train_model(cfg, &train_set, &valid_set) {
            Ok(outcome) => {
                let ck = Checkpoint {
                    params: outcome.params.clone(),
                    adam: None,
                    epoch: outcome.best_epoch as u64,
                };
                save_checkpoint(&models_dir.join(format!("{name}.fxck")), &ck)?;
                let cells = test_features
                    .iter()
                    .map(|set| set.and_then(|s| evaluate(&outcome.params, s).ok()).map(|m| m.accuracy))
                    .collect();
                accuracy.push(cells);
                models.push(ModelReport {
                    train_effect: name.clone(),
                    status: "ok".into(),
                    train_examples: train_set.len(),
                    best_epoch: Some(outcome.best_epoch),
                    best_valid_accuracy: Some(outcome.best_valid_accuracy),
                    history: outcome.history,
                });
            }
            Err(f) => {
                log::error!("{name}: training failed: {}", f.error);
                models.push(failed_model(name, train_set.len(), f.error.to_string(), f.history));
                accuracy.push(vec![None; test_sets.len()]);
            }
        }
    }

    let table1 = std::iter::once(Table1Row {
        training_set: "None (baseline)".into(),
        accuracy: accuracy[0][0],
    })
    .chain(effects.iter().enumerate().map(|(i, k)| Table1Row {
        training_set: k.label().into(),
        accuracy: accuracy[i + 1][0],
    }))
    .collect();
    let table2 = effects
        .iter()
        .enumerate()
        .map(|(i, k)| Table2Row {
            effect: k.label().into(),
            baseline: accuracy[0][i + 1],
            augmented: accuracy[i + 1][i + 1],
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        train_sets,
        test_sets,
        accuracy,
        models,
        augment_failures,
        table1,
        table2,
    })
}

fn failed_model(name: &str, n: usize, reason: String, history: Vec<EpochRecord>) -> ModelReport {
    ModelReport {
        train_effect: name.to_string(),
        status: format!("failed: {reason}"),
        train_examples: n,
        best_epoch: None,
        best_valid_accuracy: None,
        history,
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_string(), |a| format!("{a:.4}"))
}

/// Writes `report.json`, `table1.csv` and `table2.csv` into `out_dir`.
pub fn write_report(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| Error::Format {
            path: path.clone(),
            what: "table",
            reason: e.to_string(),
        }
    };
    let t1 = out_dir.join("table1.csv");
    let mut w = csv::Writer::from_path(&t1).map_err(csv_err(&t1))?;
    w.write_record(["training_set", "clean_test_accuracy"]).map_err(csv_err(&t1))?;
    for r in &report.table1 {
        w.write_record([r.training_set.clone(), fmt_cell(r.accuracy)]).map_err(csv_err(&t1))?;
    }
    w.flush().map_err(|e| Error::io(&t1, e))?;

    let t2 = out_dir.join("table2.csv");
    let mut w = csv::Writer::from_path(&t2).map_err(csv_err(&t2))?;
    w.write_record(["effect", "baseline_model", "augmented_model"]).map_err(csv_err(&t2))?;
    for r in &report.table2 {
        w.write_record([r.effect.clone(), fmt_cell(r.baseline), fmt_cell(r.augmented)])
            .map_err(csv_err(&t2))?;
    }
    w.flush().map_err(|e| Error::io(&t2, e))
}
