use fgclep::corpus::*;

/// Paired draws share every random number, so their difference is the
/// noiseless effect of the feature. The window is where that effect is at
/// least half its peak; the mean |difference| there must clear 5 noise sd.
#[test]
fn planted_features_stand_out_of_the_noise() {
    let cfg = SynthConfig::default();
    for f in FEATURES.iter() {
        let mut worst = f64::INFINITY;
        for seed in 0..20u64 {
            let base = synth_ecg(&FeatureSet::new(), seed, &cfg).unwrap();
            let with = synth_ecg(&[f.id].into(), seed, &cfg).unwrap();
            let diff: Vec<f64> = with.signal.iter().zip(&base.signal).map(|(a, b)| (a - b).abs()).collect();
            let peak = diff.iter().copied().fold(0.0, f64::max);
            let window: Vec<f64> = diff.iter().copied().filter(|&d| d >= 0.5 * peak).collect();
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            worst = worst.min(mean);
        }
        println!("{} {worst:.4}", f.name);
        assert!(worst > 5.0 * cfg.noise_std, "{}: {worst}", f.name);
    }
}

fn read(p: std::path::PathBuf) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn same_config_writes_identical_files() {
    let cfg = CorpusConfig {
        n_train: 12,
        n_valid: 3,
        n_test: 5,
        seed: 9,
        ..CorpusConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    save_corpus(&synth_corpus(&cfg).unwrap(), &a).unwrap();
    save_corpus(&synth_corpus(&cfg).unwrap(), &b).unwrap();
    assert_eq!(read(manifest_path(&a)), read(manifest_path(&b)));
    assert_eq!(read(signal_path(&a)), read(signal_path(&b)));

    let other = synth_corpus(&CorpusConfig { seed: 10, ..cfg.clone() }).unwrap();
    let c = dir.path().join("c");
    save_corpus(&other, &c).unwrap();
    assert_ne!(read(signal_path(&a)), read(signal_path(&c)));
}

#[test]
fn file_round_trip_is_bit_exact() {
    let corpus = synth_corpus(&CorpusConfig {
        n_train: 6,
        n_valid: 2,
        n_test: 2,
        seed: 3,
        ..CorpusConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("demo");
    save_corpus(&corpus, &prefix).unwrap();
    let back = load_corpus(&prefix).unwrap();
    assert_eq!(back.records, corpus.records);
    for (x, y) in back.records.iter().zip(&corpus.records) {
        assert!(x.ecg.signal.iter().zip(&y.ecg.signal).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
