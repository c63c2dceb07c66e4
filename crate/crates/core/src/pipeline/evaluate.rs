use serde::{Deserialize, Serialize};

use super::dataset::{BatchMode, FeatureSet};
use crate::error::{Error, Result};
use crate::nn::{argmax_row, predict, ModelParams};

pub const EVAL_BATCH: usize = 64;

/// Accuracy, per-class accuracy and the confusion matrix of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub correct: usize,
    /// `correct / n`, i.e. the confusion-matrix trace over N.
    pub accuracy: f64,
    /// `None` for classes with no examples.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_predictions(labels: &[u8], predictions: &[usize], n_classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            if y as usize >= n_classes || p >= n_classes {
                return Err(Error::Data(format!("class index outside 0..{n_classes}")));
            }
            confusion[y as usize][p] += 1;
        }
        let n = labels.len();
        let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| row[k] as f64 / total as f64)
            })
            .collect();
        Ok(Self {
            n,
            correct,
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            per_class_accuracy,
            confusion,
        })
    }
}

/// Class predictions in eval mode; ties go to the lowest class index.
pub fn predict_classes(params: &ModelParams<f32>, set: &FeatureSet) -> Result<Vec<usize>> {
    let k = params.config.n_classes;
    let mut out = Vec::with_capacity(set.len());
    for (inputs, _) in set.batches(EVAL_BATCH, 0, 0, BatchMode::Eval) {
        let probs = predict(params, &inputs)?;
        out.extend(probs.chunks(k).map(argmax_row));
    }
    Ok(out)
}

/// Eval-mode metrics of `params` on `set`. Pure: never touches the model.
pub fn evaluate(params: &ModelParams<f32>, set: &FeatureSet) -> Result<Metrics> {
    let preds = predict_classes(params, set)?;
    Metrics::from_predictions(&set.labels, &preds, params.config.n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_correct() {
        let labels: Vec<u8> = (0..22).map(|i| (i % 11) as u8).collect();
        let preds: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let m = Metrics::from_predictions(&labels, &preds, 11).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class_accuracy.iter().all(|&a| a == Some(1.0)));
    }

    #[test]
    fn uniform_random_predictor_near_chance() {
        // Binomial oracle: mean 1/11, sd sqrt(p(1-p)/n).
        let n = 11_000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<u8> = (0..n).map(|i| (i % 11) as u8).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..11)).collect();
        let m = Metrics::from_predictions(&labels, &preds, 11).unwrap();
        let p = 1.0 / 11.0;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((m.accuracy - p).abs() < 3.0 * sd, "{}", m.accuracy);
    }

    proptest! {
        #[test]
        fn accuracy_is_trace_over_n(pairs in proptest::collection::vec((0u8..11, 0usize..11), 1..200)) {
            let labels: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let m = Metrics::from_predictions(&labels, &preds, 11).unwrap();
            let trace: usize = (0..11).map(|k| m.confusion[k][k]).sum();
            prop_assert_eq!(m.accuracy, trace as f64 / labels.len() as f64);
            for k in 0..11 {
                let count = labels.iter().filter(|&&l| l as usize == k).count();
                prop_assert_eq!(m.confusion[k].iter().sum::<usize>(), count);
            }
        }
    }
}
