use fxclass::features::LogMelSpectrogram;
use fxclass::nn::layers::cross_entropy;
use fxclass::nn::{forward, load_checkpoint, save_checkpoint, Checkpoint, Mode, ModelConfig, ModelParams};
use fxclass::pipeline::{evaluate, train, BatchMode, FeatureSet, TrainConfig};
use fxclass::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: usize = 16;
const W: usize = 12;

/// Class k is a horizontal ridge at row k plus noise, shifted in time at random.
fn ridge_set(per_class: usize, seed: u64) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = FeatureSet::empty(H, W);
    for k in 0..11 {
        for i in 0..per_class {
            let mut values: Vec<f32> = (0..H * W).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let start = rng.gen_range(0..W / 2);
            for t in start..start + W / 2 {
                values[(k + 2) * W + t] += 2.0;
                values[(k + 3) * W + t] += 1.0;
            }
            let spec = LogMelSpectrogram {
                n_mels: H,
                n_frames: W,
                values,
            };
            set.push(format!("c{k}_{i}"), k as u8, &spec).unwrap();
        }
    }
    set
}

fn config() -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 16,
        patience: 10,
        max_epochs: 25,
        seed: 3,
    }
}

fn model(seed: u64) -> ModelParams<f32> {
    ModelParams::init(ModelConfig::single_layer_for(H, W), seed).unwrap()
}

fn mean_loss(params: &ModelParams<f32>, set: &FeatureSet) -> f64 {
    let mut total = 0.0;
    for (x, y) in set.batches(64, 0, 0, BatchMode::Eval) {
        let (probs, _) = forward(params, &x, Mode::Eval, 0).unwrap();
        total += cross_entropy(&probs, &y, 11) * y.len() as f64;
    }
    total / set.len() as f64
}

#[test]
fn loss_drops_below_uniform_within_five_epochs() {
    let train_set = ridge_set(8, 1);
    let valid = ridge_set(3, 2);
    let cfg = TrainConfig {
        max_epochs: 5,
        patience: 5,
        ..config()
    };
    let out = train(model(1), &train_set, &valid, &cfg).unwrap();
    let best = out.history.iter().map(|h| h.train_loss).fold(f64::INFINITY, f64::min);
    assert!(best < 11f64.ln(), "history {:?}", out.history);
}

#[test]
fn returned_weights_reproduce_best_validation_accuracy() {
    let train_set = ridge_set(6, 4);
    let valid = ridge_set(3, 5);
    let out = train(model(2), &train_set, &valid, &config()).unwrap();
    let best = out
        .history
        .iter()
        .map(|h| h.valid_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let first_best = out.history.iter().find(|h| h.valid_accuracy == best).unwrap().epoch;
    assert_eq!(out.best_epoch, first_best);
    assert_eq!(out.best_valid_accuracy, best);
    assert_eq!(evaluate(&out.params, &valid).unwrap().accuracy, best);
    assert!(mean_loss(&out.params, &train_set) < 11f64.ln());
}

#[test]
fn training_is_reproducible() {
    let train_set = ridge_set(4, 6);
    let valid = ridge_set(2, 7);
    let cfg = TrainConfig {
        max_epochs: 4,
        ..config()
    };
    let a = train(model(9), &train_set, &valid, &cfg).unwrap();
    let b = train(model(9), &train_set, &valid, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
}

#[test]
fn evaluate_is_pure() {
    let set = ridge_set(3, 8);
    let params = model(4);
    let before = params.clone();
    let m1 = evaluate(&params, &set).unwrap();
    let m2 = evaluate(&params, &set).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(params, before);
    let trace: usize = (0..11).map(|k| m1.confusion[k][k]).sum();
    assert_eq!(m1.accuracy, trace as f64 / set.len() as f64);
}

#[test]
fn nan_input_aborts_training() {
    let mut train_set = ridge_set(3, 9);
    train_set.data[5] = f32::NAN;
    let valid = ridge_set(2, 10);
    let failure = train(model(5), &train_set, &valid, &config()).unwrap_err();
    assert!(failure.error.is_numerical(), "{}", failure.error);
    assert!(failure.last_good.is_none());
}

#[test]
fn geometry_mismatch_is_rejected() {
    let set = ridge_set(2, 11);
    let params = ModelParams::<f32>::init(ModelConfig::single_layer_for(H, W + 1), 0).unwrap();
    let failure = train(params, &set, &set, &config()).unwrap_err();
    assert!(matches!(failure.error, Error::Shape(_)));
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let train_set = ridge_set(4, 12);
    let valid = ridge_set(2, 13);
    let cfg = TrainConfig {
        max_epochs: 3,
        ..config()
    };
    let out = train(model(6), &train_set, &valid, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fxck");
    save_checkpoint(
        &path,
        &Checkpoint {
            params: out.params.clone(),
            adam: None,
            epoch: out.best_epoch as u64,
        },
    )
    .unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(
        evaluate(&loaded.params, &valid).unwrap(),
        evaluate(&out.params, &valid).unwrap()
    );
}
