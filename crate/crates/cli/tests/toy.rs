use fxclass::audio_io::AudioClip;
use fxclass::features::FeatureExtractor;
use fxclass::pipeline::{DatasetManifest, Split};
use fxclass_cli::toy::{toy_clips, toygen, ToySpec};

fn mean_mel(fx: &FeatureExtractor, samples: &[f32]) -> Vec<f64> {
    let spec = fx.log_mel(&AudioClip::new(samples.to_vec(), 16000)).unwrap();
    (0..spec.n_mels)
        .map(|m| (0..spec.n_frames).map(|t| spec.get(m, t) as f64).sum::<f64>() / spec.n_frames as f64)
        .collect()
}

#[test]
fn nearest_neighbour_on_mean_mel_separates_classes() {
    let spec = ToySpec { per_class_train: 20, per_class_valid: 0, per_class_test: 5, seed: 2024 };
    let fx = FeatureExtractor::new();
    let clips = toy_clips(&spec);
    let vecs: Vec<(u8, Split, Vec<f64>)> = clips.iter().map(|(_, l, s, x)| (*l, *s, mean_mel(&fx, x))).collect();
    let train: Vec<&(u8, Split, Vec<f64>)> = vecs.iter().filter(|v| v.1 == Split::Train).collect();
    let test: Vec<&(u8, Split, Vec<f64>)> = vecs.iter().filter(|v| v.1 == Split::Test).collect();
    let mut correct = 0;
    for t in &test {
        let nn = train
            .iter()
            .min_by(|a, b| {
                let da: f64 = a.2.iter().zip(&t.2).map(|(x, y)| (x - y).powi(2)).sum();
                let db: f64 = b.2.iter().zip(&t.2).map(|(x, y)| (x - y).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        if nn.0 == t.0 {
            correct += 1;
        } else {
            eprintln!("class {} -> {}", t.0, nn.0);
        }
    }
    let acc = correct as f64 / test.len() as f64;
    eprintln!("1-NN accuracy {acc}");
    assert!(acc >= 0.9, "1-NN accuracy {acc}");
}

#[test]
fn toygen_counts_and_determinism() {
    let spec = ToySpec { per_class_train: 2, per_class_valid: 1, per_class_test: 1, seed: 5 };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = toygen(&spec, a.path()).unwrap();
    toygen(&spec, b.path()).unwrap();
    assert_eq!(ma.split(Split::Train).len(), 22);
    assert_eq!(ma.split(Split::Valid).len(), 11);
    assert_eq!(ma.split(Split::Test).len(), 11);
    let csv_a = std::fs::read(a.path().join("manifest.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join("manifest.csv")).unwrap());
    for row in &ma.rows {
        let rel = row.path.strip_prefix(a.path()).unwrap();
        assert_eq!(std::fs::read(&row.path).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
    }
    let reloaded = DatasetManifest::load(a.path().join("manifest.csv")).unwrap();
    assert_eq!(reloaded, ma);
}
