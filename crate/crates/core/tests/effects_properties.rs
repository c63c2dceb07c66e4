use fxclass::audio_io::{load_wav, save_wav, AudioClip};
use fxclass::effects::{
    apply_effect, augment_dataset, draw_pitch_steps, process, EffectConfig, EffectKind, Variant,
};
use fxclass::pipeline::{DatasetManifest, ManifestRow, Split};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: u32 = 16_000;

fn noise(n: usize, seed: u64, amp: f32) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-amp..=amp)).collect()
}

fn all_configs() -> Vec<EffectConfig> {
    let mut out = Vec::new();
    for kind in EffectKind::ALL {
        for variant in [Variant::A, Variant::B] {
            out.push(EffectConfig::default_for(kind, variant, 99));
        }
    }
    out
}

#[test]
fn bounded_inputs_stay_within_headroom() {
    let n = 16_000;
    let sine: Vec<f32> = (0..n).map(|i| (2.0 * std::f32::consts::PI * 220.0 * i as f32 / 16_000.0).sin()).collect();
    let square: Vec<f32> = sine.iter().map(|v| v.signum()).collect();
    let mut impulse = vec![0.0f32; n];
    impulse[0] = 1.0;
    let inputs = [noise(n, 1, 1.0), sine, square, impulse, vec![1.0; n]];
    for cfg in all_configs() {
        for x in &inputs {
            let y = process(x, FS, &cfg).unwrap();
            let peak = y.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert!(y.iter().all(|v| v.is_finite()), "{:?}", cfg.kind);
            assert!(peak <= 4.0, "{:?}/{:?}: peak {peak}", cfg.kind, cfg.variant);
        }
    }
}

#[test]
fn delay_based_effects_are_linear() {
    let x = noise(20_000, 3, 0.9);
    for cfg in all_configs() {
        if !matches!(
            cfg.kind,
            EffectKind::Echo | EffectKind::Flanger | EffectKind::Chorus | EffectKind::Reverb
        ) {
            continue;
        }
        let y = process(&x, FS, &cfg).unwrap();
        for a in [-1.0f32, -0.3, 0.5, 1.0] {
            let xa: Vec<f32> = x.iter().map(|v| a * v).collect();
            let ya = process(&xa, FS, &cfg).unwrap();
            let err = ya.iter().zip(&y).map(|(p, q)| (p - a * q).abs()).fold(0.0, f32::max);
            assert!(err < 1e-5, "{:?}/{:?} a={a}: {err}", cfg.kind, cfg.variant);
        }
    }
}

#[test]
fn variants_differ_on_noise() {
    let x = noise(32_000, 7, 0.5);
    for kind in EffectKind::ALL {
        let a = process(&x, FS, &EffectConfig::default_for(kind, Variant::A, 5)).unwrap();
        let b = process(&x, FS, &EffectConfig::default_for(kind, Variant::B, 5)).unwrap();
        let n = a.len().min(b.len());
        let rms = (a[..n].iter().zip(&b[..n]).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rms >= 1e-3, "{kind:?}: rms {rms}");
    }
}

#[test]
fn pitch_steps_are_uniform_over_one_to_five() {
    // χ² with 4 degrees of freedom; 13.28 is the 0.99 quantile.
    let mut counts = [0usize; 7];
    for i in 0..1000u64 {
        counts[draw_pitch_steps(fxclass::effects::clip_seed(11, &format!("note_{i}"))) as usize] += 1;
    }
    assert_eq!(counts[0] + counts[6], 0);
    let expected = 200.0;
    let chi2: f64 = counts[1..6].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 13.28, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn augment_writes_one_four_second_file_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for i in 0..10 {
        let path = dir.path().join(format!("in_{i}.wav"));
        let len = 40_000 + 5_000 * i;
        save_wav(&AudioClip::new(noise(len, i as u64, 0.5), FS), &path).unwrap();
        rows.push(ManifestRow {
            example_id: format!("in_{i}"),
            path,
            label: (i % 11) as u8,
            split: Split::Train,
            effect: None,
        });
    }
    let manifest = DatasetManifest::new(rows);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let first = augment_dataset(&manifest, EffectKind::Echo, Split::Train, None, &out_a, 4).unwrap();
    let second = augment_dataset(&manifest, EffectKind::Echo, Split::Train, None, &out_b, 4).unwrap();
    assert!(first.failures.is_empty());
    assert_eq!(first.manifest.len(), 10);
    for (r, s) in first.manifest.rows.iter().zip(&second.manifest.rows) {
        let clip = load_wav(&r.path).unwrap();
        assert_eq!(clip.samples.len(), 64_000);
        assert_eq!(r.effect, Some(EffectKind::Echo));
        assert_eq!(std::fs::read(&r.path).unwrap(), std::fs::read(&s.path).unwrap());
    }
    assert_eq!(first.manifest.labels(), manifest.labels());
}

#[test]
fn one_bad_file_does_not_abort_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.wav");
    save_wav(&AudioClip::new(noise(64_000, 1, 0.5), FS), &good).unwrap();
    let bad = dir.path().join("bad.wav");
    std::fs::write(&bad, b"not a wav").unwrap();
    let row = |id: &str, path| ManifestRow {
        example_id: id.into(),
        path,
        label: 0,
        split: Split::Test,
        effect: None,
    };
    let manifest = DatasetManifest::new(vec![
        row("good", good),
        row("bad", bad),
        row("missing", dir.path().join("missing.wav")),
    ]);
    let out = augment_dataset(&manifest, EffectKind::Reverb, Split::Test, None, &dir.path().join("out"), 0).unwrap();
    assert_eq!(out.manifest.len(), 1);
    assert_eq!(out.failures.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_is_always_four_seconds(len in 100usize..90_000, kind_idx in 0usize..7, b: bool, seed: u64) {
        let kind = EffectKind::ALL[kind_idx];
        let variant = if b { Variant::B } else { Variant::A };
        let clip = AudioClip::new(noise(len, seed, 0.8), FS);
        let out = apply_effect(&clip, &EffectConfig::default_for(kind, variant, seed)).unwrap();
        prop_assert_eq!(out.samples.len(), 64_000);
        prop_assert_eq!(out.sample_rate, FS);
    }

    #[test]
    fn processing_is_deterministic(kind_idx in 0usize..7, seed: u64) {
        let cfg = EffectConfig::default_for(EffectKind::ALL[kind_idx], Variant::A, seed);
        let x = noise(8_000, seed, 0.7);
        prop_assert_eq!(process(&x, FS, &cfg).unwrap(), process(&x, FS, &cfg).unwrap());
    }
}
