use fgclep::corpus::{synth_corpus, Corpus, CorpusConfig, Split};
use fgclep::encoders::{Model, ModelConfig};
use fgclep::error::Error;
use fgclep::pipeline::*;
use fgclep::proposer::{ProposerConfig, ProposerMode};
use sha2::{Digest, Sha256};

fn corpus(n_train: usize, seed: u64) -> Corpus {
    synth_corpus(&CorpusConfig {
        n_train,
        n_valid: 2,
        n_test: 2,
        p_mention: 0.3,
        seed,
        ..CorpusConfig::default()
    })
    .unwrap()
}

fn quick(batch_size: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size,
        epochs_stage1: epochs,
        epochs_stage3: 1,
        base_lr: 1e-3,
        seed: 4,
        ..TrainConfig::default()
    }
}

fn stage1(c: &Corpus, cfg: &TrainConfig, log: &mut MetricsLog) -> Checkpoint {
    train_stage(c, StageInit::Fresh(&ModelConfig::default()), cfg, cfg.epochs_stage1, Stage::Clep, log).unwrap()
}

#[test]
fn partial_batches_are_dropped() {
    let c = corpus(10, 1);
    let mut log = MetricsLog::default();
    let ck = stage1(&c, &quick(5, 1), &mut log);
    assert_eq!(log.losses(Stage::Clep).len(), 2);
    assert_eq!(ck.optimizer.step, 2);

    let c = corpus(11, 1);
    let mut log = MetricsLog::default();
    stage1(&c, &quick(5, 2), &mut log);
    assert_eq!(log.losses(Stage::Clep).iter().map(|l| l.0).collect::<Vec<_>>(), [0, 0, 1, 1]);
}

#[test]
fn too_small_train_split_is_a_config_error() {
    let c = corpus(4, 1);
    let r = train_stage(&c, StageInit::Fresh(&ModelConfig::default()), &quick(5, 1), 1, Stage::Clep, &mut MetricsLog::default());
    assert!(matches!(r, Err(Error::Config(_))));
    assert!(quick(1, 1).validate().is_err());
    assert!(quick(4, 0).validate().is_err());
}

#[test]
fn epoch_order_depends_on_seed_and_epoch_only() {
    assert_eq!(epoch_order(50, 3, 2), epoch_order(50, 3, 2));
    assert_ne!(epoch_order(50, 3, 2), epoch_order(50, 3, 1));
    assert_ne!(epoch_order(50, 3, 2), epoch_order(50, 4, 2));
    let mut o = epoch_order(50, 3, 2);
    o.sort_unstable();
    assert_eq!(o, (0..50).collect::<Vec<_>>());
}

#[test]
fn training_is_byte_reproducible() {
    let c = corpus(12, 2);
    let cfg = quick(4, 2);
    let a = stage1(&c, &cfg, &mut MetricsLog::default()).to_bytes().unwrap();
    let b = stage1(&c, &cfg, &mut MetricsLog::default()).to_bytes().unwrap();
    assert_eq!(a, b);
    let other = TrainConfig { seed: 5, ..cfg };
    assert_ne!(a, stage1(&c, &other, &mut MetricsLog::default()).to_bytes().unwrap());
}

#[test]
fn checkpoint_round_trip_and_rejections() {
    let c = corpus(8, 3);
    let ck = stage1(&c, &quick(4, 1), &mut MetricsLog::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clep.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"FGCLEP01");
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);

    // one payload byte, well past the manifest
    let mut flipped = bytes.clone();
    let at = bytes.len() - 100;
    flipped[at] ^= 0x01;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Corruption(_))));

    // an older tag with a valid digest is a version problem, not corruption
    let mut old = bytes[..bytes.len() - 32].to_vec();
    old[6..8].copy_from_slice(b"00");
    let digest = Sha256::digest(&old);
    old.extend_from_slice(&digest);
    match Checkpoint::from_bytes(&old) {
        Err(e @ Error::Version { found: 0, expected: 1 }) => {
            let msg = e.to_string();
            assert!(msg.contains('0') && msg.contains('1'), "{msg}");
        }
        other => panic!("expected a version error, got {other:?}"),
    }

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Corruption(_))));
    assert!(load_checkpoint(&dir.path().join("missing.ckpt")).is_err());
}

#[test]
fn unreachable_threshold_leaves_every_report_alone() {
    let c = corpus(10, 4);
    let ck = stage1(&c, &quick(5, 1), &mut MetricsLog::default());
    // σ(sim) never exceeds σ(1) ≈ 0.731
    let cfg = ProposerConfig {
        threshold: 0.75,
        calibrated: false,
        ..ProposerConfig::default()
    };
    let mut log = MetricsLog::default();
    let out = augment_corpus(&c, &ck, &cfg, 0, &mut log).unwrap();
    assert_eq!(out.corpus, c);
    assert_eq!(out.stats.accepted, 0);
    assert!(out.stats.proposed > 0);
    assert_eq!(out.stats.records, 10);
    assert!(log.entries.iter().any(|e| e["kind"] == "augmentation"));
}

#[test]
fn augmentation_touches_train_reports_only() {
    let c = corpus(16, 5);
    let ck = stage1(&c, &quick(4, 1), &mut MetricsLog::default());
    // σ(sim) never drops below σ(−1) ≈ 0.269
    let cfg = ProposerConfig {
        threshold: 0.25,
        calibrated: false,
        ..ProposerConfig::default()
    };
    let out = augment_corpus(&c, &ck, &cfg, 0, &mut MetricsLog::default()).unwrap();
    assert!(out.stats.accepted > 0);
    assert_eq!(out.stats.accepted, out.stats.proposed);
    assert!(out.stats.accepted_precision().unwrap() >= out.stats.raw_precision().unwrap());
    let mut changed = 0;
    for (a, b) in out.corpus.records.iter().zip(&c.records) {
        assert_eq!(a.ecg, b.ecg);
        assert_eq!(a.split, b.split);
        if a.split != Split::Train {
            assert_eq!(a.report, b.report);
        } else if a.report.text != b.report.text {
            changed += 1;
            assert!(a.report.text.starts_with(&b.report.text));
            assert!(a.report.mentioned_features.is_superset(&b.report.mentioned_features));
        }
    }
    assert_eq!(changed, out.stats.augmented_records);

    let stage3 = Checkpoint { stage: Stage::Fgclep, ..ck };
    assert!(matches!(
        augment_corpus(&c, &stage3, &cfg, 0, &mut MetricsLog::default()),
        Err(Error::Config(_))
    ));
}

fn run(c: &Corpus, cfg: &TrainConfig) -> RunOutcome {
    run_fgclep(c, &ModelConfig::default(), cfg, &ProposerConfig::default()).unwrap()
}

#[test]
fn stage_three_continues_from_stage_one() {
    let c = corpus(8, 6);
    let cfg = quick(4, 1);
    let out = run(&c, &cfg);
    assert_eq!(out.clep.stage, Stage::Clep);
    assert_eq!(out.fgclep.stage, Stage::Fgclep);
    let manual = train_stage(&out.augmentation.corpus, StageInit::From(&out.clep), &cfg, 1, Stage::Fgclep, &mut MetricsLog::default()).unwrap();
    assert_eq!(manual, out.fgclep);
    // zero epochs from a checkpoint reproduces it, so stage 3 starts at stage 1's parameters
    let idle = train_stage(&c, StageInit::From(&out.clep), &cfg, 0, Stage::Fgclep, &mut MetricsLog::default()).unwrap();
    assert_eq!(idle.model, out.clep.model);
}

#[test]
fn from_scratch_reinitialises_stage_three() {
    let c = corpus(8, 7);
    let cfg = TrainConfig {
        from_scratch: true,
        ..quick(4, 1)
    };
    let out = run(&c, &cfg);
    let idle = train_stage(&c, StageInit::Reinit(&out.clep), &cfg, 0, Stage::Fgclep, &mut MetricsLog::default()).unwrap();
    let fresh = Model::init(out.clep.model.config.clone(), out.clep.model.vocab.clone(), cfg.seed).unwrap();
    assert_eq!(idle.model, fresh);
    assert_ne!(idle.model.params, out.clep.model.params);
    let manual = train_stage(&out.augmentation.corpus, StageInit::Reinit(&out.clep), &cfg, 1, Stage::Fgclep, &mut MetricsLog::default()).unwrap();
    assert_eq!(manual, out.fgclep);
}

#[test]
fn zero_stage_three_epochs_copies_stage_one() {
    let c = corpus(8, 8);
    let cfg = TrainConfig {
        epochs_stage3: 0,
        ..quick(4, 1)
    };
    let out = run(&c, &cfg);
    assert_eq!(out.fgclep, Checkpoint { stage: Stage::Fgclep, ..out.clep.clone() });
    assert!(out.log.losses(Stage::Fgclep).is_empty());
}

#[test]
fn metrics_log_is_json_lines() {
    let c = corpus(8, 9);
    let out = run(&c, &quick(4, 2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    out.log.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let steps = rows.iter().filter(|r| r["kind"] == "step").count();
    let augments = rows.iter().filter(|r| r["kind"] == "augmentation").count();
    assert_eq!(steps, 2 * 2 + 2);
    assert_eq!(augments, 1);
    for r in rows.iter().filter(|r| r["kind"] == "step") {
        assert!(r["loss"].as_f64().unwrap().is_finite());
        assert!(r["l_sig"].is_number() && r["l_fnm"].is_number());
    }
}

#[test]
fn ablation_arms_are_reachable_by_config() {
    let c = corpus(8, 10);
    for variant in ["sigmoid", "infonce"] {
        let cfg: TrainConfig = serde_json::from_value(serde_json::json!({
            "batch_size": 4, "epochs_stage1": 1, "epochs_stage3": 1, "base_lr": 1e-3, "loss_variant": variant
        }))
        .unwrap();
        let out = run(&c, &cfg);
        assert_eq!(out.log.losses(Stage::Fgclep).len(), 2);
    }
    let cfg = TrainConfig {
        lambda: 0.0,
        ..quick(4, 1)
    };
    run(&c, &cfg);

    // stage 3 on the unaugmented reports
    let original = ProposerConfig {
        mode: ProposerMode::None,
        ..ProposerConfig::default()
    };
    let out = run_fgclep(&c, &ModelConfig::default(), &quick(4, 1), &original).unwrap();
    assert_eq!(out.augmentation.corpus, c);
    assert_eq!(out.augmentation.stats.proposed, 0);
    assert!(serde_json::from_value::<TrainConfig>(serde_json::json!({"batch": 4})).is_err());
}
