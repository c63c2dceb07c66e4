use serde::{Deserialize, Serialize};

use super::dataset::{BatchMode, FeatureSet};
use super::evaluate::evaluate;
use crate::effects::splitmix64;
use crate::error::{Error, Result};
use crate::nn::layers::cross_entropy;
use crate::nn::{adam_step, backward, forward, AdamConfig, AdamState, Mode, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 50,
            patience: 10,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2 for batch norm".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Tracks the monitored score: only a strictly higher value counts as an
/// improvement, so the earliest epoch wins ties.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Best (epoch, score) seen so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        match self.best {
            Some((_, b)) if score <= b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                Verdict::Improved
            }
        }
    }
}

/// Replays a score sequence (epochs numbered from 1) and returns
/// (best epoch, last epoch run).
pub fn replay_early_stopping(scores: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
    let mut es = EarlyStopping::new(patience);
    let mut last = 0;
    for (i, &s) in scores.iter().enumerate().take(max_epochs) {
        last = i + 1;
        if es.observe(i + 1, s) == Verdict::Stop {
            break;
        }
    }
    (es.best().map_or(0, |b| b.0), last)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the best validation epoch.
    pub params: ModelParams<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
    pub stopped_early: bool,
}

/// Training aborted; `last_good` holds the best weights reached before the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: Option<ModelParams<f32>>,
    pub history: Vec<EpochRecord>,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((epoch as u64) << 32) | batch as u64))
}

fn run_epoch(
    params: &mut ModelParams<f32>,
    adam: &mut AdamState<f32>,
    opt: &AdamConfig,
    train: &FeatureSet,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    for (b, (inputs, labels)) in train
        .batches(cfg.batch_size, cfg.seed, epoch as u64, BatchMode::Train)
        .into_iter()
        .enumerate()
    {
        let (probs, trace) = forward(params, &inputs, Mode::Train, dropout_seed(cfg.seed, epoch, b))?;
        let loss = cross_entropy(&probs, &labels, params.config.n_classes);
        if !loss.is_finite() {
            return Err(Error::NonFinite { tensor: "loss".into() });
        }
        loss_sum += loss * labels.len() as f64;
        count += labels.len();
        params.apply_running_stats(&trace);
        let grads = backward(params, trace, &labels)?;
        adam_step(params, &grads, adam, opt)?;
        params.check_finite()?;
    }
    Ok(if count == 0 { f64::NAN } else { loss_sum / count as f64 })
}

/// Adam training with early stopping on validation accuracy.
pub fn train(
    mut params: ModelParams<f32>,
    train: &FeatureSet,
    valid: &FeatureSet,
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error: Error, last_good: Option<ModelParams<f32>>, history: Vec<EpochRecord>| TrainFailure {
        error,
        last_good,
        history,
    };
    let geometry = (params.config.n_mels, params.config.n_frames);
    let checks = cfg.validate().and_then(|_| {
        for (name, set) in [("training", train), ("validation", valid)] {
            if set.is_empty() {
                return Err(Error::Data(format!("{name} set is empty")));
            }
            if (set.n_mels, set.n_frames) != geometry {
                return Err(Error::Shape(format!(
                    "{name} features are {}x{}, model expects {}x{}",
                    set.n_mels, set.n_frames, geometry.0, geometry.1
                )));
            }
        }
        if train.len() < 2 {
            return Err(Error::Data("training needs at least 2 examples".into()));
        }
        Ok(())
    });
    if let Err(e) = checks {
        return Err(fail(e, None, Vec::new()));
    }

    let opt = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let train_loss = match run_epoch(&mut params, &mut adam, &opt, train, cfg, epoch) {
            Ok(l) => l,
            Err(e) => {
                let last_good = stopper.best().map(|_| best);
                return Err(fail(e, last_good, history));
            }
        };
        let valid_accuracy = match evaluate(&params, valid) {
            Ok(m) => m.accuracy,
            Err(e) => {
                let last_good = stopper.best().map(|_| best);
                return Err(fail(e, last_good, history));
            }
        };
        log::info!("epoch {epoch}: train loss {train_loss:.5}, valid accuracy {valid_accuracy:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_accuracy,
        });
        match stopper.observe(epoch, valid_accuracy) {
            Verdict::Improved => best = params.clone(),
            Verdict::Continue => {}
            Verdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_valid_accuracy) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        best_valid_accuracy,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_returns_epoch_two() {
        let mut scores = vec![0.5, 0.6];
        scores.extend([0.6; 10]);
        scores.extend([0.9; 5]);
        assert_eq!(replay_early_stopping(&scores, 10, 200), (2, 12));
    }

    #[test]
    fn ties_keep_earliest() {
        let scores = [0.3, 0.7, 0.7, 0.7, 0.2];
        assert_eq!(replay_early_stopping(&scores, 10, 200), (2, 5));
    }

    #[test]
    fn improvement_resets_patience() {
        let scores = [0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2];
        assert_eq!(replay_early_stopping(&scores, 3, 200), (4, 7));
    }

    #[test]
    fn max_epochs_caps_run() {
        let scores: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(replay_early_stopping(&scores, 10, 20), (20, 20));
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
