//! Manifests, ingestion, feature sets, training with early stopping,
//! evaluation and the experiment grid.

pub mod dataset;
pub mod evaluate;
pub mod experiment;
pub mod ingest;
pub mod manifest;
pub mod train;

pub use dataset::{batch_indices, featurize_manifest, load_feature_set, BatchMode, FeatureSet, InputGeometry};
pub use evaluate::{evaluate, predict_classes, Metrics};
pub use experiment::{experiment_grid, train_model, write_report, ExperimentConfig, ExperimentReport};
pub use ingest::{ingest_nsynth, IngestOutcome};
pub use manifest::{family_label, DatasetManifest, ManifestRow, Split, FAMILIES, NUM_CLASSES};
pub use train::{replay_early_stopping, train, EarlyStopping, EpochRecord, TrainConfig, TrainFailure, TrainOutcome, Verdict};
