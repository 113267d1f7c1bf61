mod common;

use common::model_for;
use fgclep::corpus::{synth_corpus, Corpus, CorpusConfig, Split};
use fgclep::error::Error;
use fgclep::evalkit::*;
use fgclep::numerics::{sigmoid, Matrix};
use fgclep::proposer::ScoreScale;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n_train: usize, n_test: usize, seed: u64) -> Corpus {
    synth_corpus(&CorpusConfig {
        n_train,
        n_valid: 1,
        n_test,
        p_mention: 0.5,
        seed,
        ..CorpusConfig::default()
    })
    .unwrap()
}

/// Counts positive/negative pairs directly: wins 1, ties ½.
fn pair_counting_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn label_strategy() -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<Vec<bool>>)> {
    (2usize..=50, 1usize..=5).prop_flat_map(|(n, c)| {
        (
            // coarse grid so ties are common
            prop::collection::vec(prop::collection::vec(0u8..6, c), n),
            prop::collection::vec(prop::collection::vec(any::<bool>(), c), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn macro_auc_matches_pair_counting((grid, labels) in label_strategy()) {
        let c = labels[0].len();
        let scores: Vec<Vec<f64>> = grid.iter().map(|r| r.iter().map(|&v| v as f64 / 5.0).collect()).collect();
        let p = Matrix::from_rows(&scores).unwrap();
        let y = LabelMatrix::new(names(&["a", "b", "c", "d", "e"][..c]), labels.clone()).unwrap();
        let oracle: Vec<Option<f64>> = (0..c)
            .map(|k| {
                let col: Vec<f64> = scores.iter().map(|r| r[k]).collect();
                pair_counting_auc(&col, &y.column(k))
            })
            .collect();
        let scored: Vec<f64> = oracle.iter().flatten().copied().collect();
        match macro_auc(&p, &y) {
            Ok(r) => {
                let want = scored.iter().sum::<f64>() / scored.len() as f64;
                prop_assert!((r.macro_auc - want).abs() <= 1e-12);
                prop_assert_eq!(r.per_class.len() + r.skipped_classes.len(), c);
            }
            Err(Error::EmptyEvaluation(_)) => prop_assert!(scored.is_empty()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn strictly_increasing_transforms_keep_auc(
        (grid, labels) in label_strategy(),
        t in 0.5f64..20.0,
        b in -10.0f64..10.0,
    ) {
        let c = labels[0].len();
        let sims: Vec<Vec<f64>> = grid.iter().map(|r| r.iter().map(|&v| v as f64 / 2.5 - 1.0).collect()).collect();
        let y = LabelMatrix::new(names(&["a", "b", "c", "d", "e"][..c]), labels).unwrap();
        let literal = Matrix::from_rows(&sims.iter().map(|r| r.iter().map(|&s| sigmoid(s)).collect()).collect::<Vec<_>>()).unwrap();
        let affine = Matrix::from_rows(&sims.iter().map(|r| r.iter().map(|&s| sigmoid(t * s + b)).collect()).collect::<Vec<_>>()).unwrap();
        match (macro_auc(&literal, &y), macro_auc(&affine, &y)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.macro_auc.to_bits(), b.macro_auc.to_bits()),
            (Err(_), Err(_)) => {}
            _ => return Err(TestCaseError::fail("only one scale was scorable")),
        }
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let p = Matrix::zeros(3, 2);
    let y = LabelMatrix::new(names(&["a"]), vec![vec![true], vec![false], vec![true]]).unwrap();
    assert!(matches!(macro_auc(&p, &y), Err(Error::Shape(_))));
    assert!(LabelMatrix::new(names(&["a", "b"]), vec![vec![true]]).is_err());
}

#[test]
fn zero_shot_auc_ignores_the_learned_scale() {
    let c = corpus(20, 60, 11);
    let model = model_for(&c, 12);
    for set in [LabelSet::Diagnoses, LabelSet::Features] {
        let lit = zero_shot_auc(&model, &c, Split::Test, set, None, ScoreScale::Literal).unwrap();
        let cal = zero_shot_auc(&model, &c, Split::Test, set, None, ScoreScale::Calibrated).unwrap();
        assert_eq!(lit.macro_auc.to_bits(), cal.macro_auc.to_bits());
        assert_eq!(lit.per_class, cal.per_class);
    }
}

#[test]
fn zero_shot_matches_scalar_recomputation() {
    let c = corpus(3, 1, 21);
    let model = model_for(&c, 22);
    let signals: Vec<&[f64]> = c.records[..3].iter().map(|r| r.ecg.signal.as_slice()).collect();
    let classes = names(&["atrial fibrillation", "tall r wave"]);
    let p = zero_shot(&model, &signals, &classes).unwrap();
    assert_eq!((p.rows(), p.cols()), (3, 2));
    for (i, s) in signals.iter().enumerate() {
        let (_, e_p) = model.embed_ecg(s).unwrap();
        for (k, name) in classes.iter().enumerate() {
            let (_, t_p) = model.embed_text(name).unwrap();
            let want = 1.0 / (1.0 + (-cosine(&e_p, &t_p)).exp());
            assert!((p.get(i, k) - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn orthogonal_embedding_scores_one_half() {
    let c = corpus(3, 1, 23);
    let model = model_for(&c, 24);
    let (_, t_p) = model.embed_text("wide qrs complex").unwrap();
    // Gram-Schmidt a random vector against the prompt embedding
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut v: Vec<f64> = (0..t_p.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let proj = v.iter().zip(&t_p).map(|(a, b)| a * b).sum::<f64>() / t_p.iter().map(|x| x * x).sum::<f64>();
    for (a, b) in v.iter_mut().zip(&t_p) {
        *a -= proj * b;
    }
    let p = zero_shot_scaled(&model, &[v], &names(&["wide qrs complex"]), ScoreScale::Literal).unwrap();
    assert!((p.get(0, 0) - 0.5).abs() < 1e-12);
}

#[test]
fn scores_are_not_normalised_across_classes() {
    let c = corpus(3, 1, 25);
    let model = model_for(&c, 26);
    let classes = names(&["tall r wave", "tall r"]);
    let (_, a) = model.embed_text(&classes[0]).unwrap();
    let (_, b) = model.embed_text(&classes[1]).unwrap();
    let unit = |v: &[f64]| -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    };
    let (a, b) = (unit(&a), unit(&b));
    let e: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let p = zero_shot_scaled(&model, &[e], &classes, ScoreScale::Literal).unwrap();
    assert!(p.get(0, 0) > 0.7 && p.get(0, 1) > 0.7, "{:?}", p.row(0));
    assert!(p.get(0, 0) + p.get(0, 1) > 1.0);
}

#[test]
fn empty_prompts_are_rejected() {
    let c = corpus(3, 1, 27);
    let model = model_for(&c, 28);
    let signals: Vec<&[f64]> = vec![c.records[0].ecg.signal.as_slice()];
    match zero_shot(&model, &signals, &names(&["tall r wave", "!!"])) {
        Err(Error::EmptyInput(msg)) => assert!(msg.contains("!!")),
        other => panic!("expected empty-input error, got {other:?}"),
    }
    assert!(zero_shot(&model, &signals, &[]).is_err());
}

#[test]
fn ensemble_is_the_elementwise_max_over_prompts() {
    let c = corpus(6, 1, 31);
    let model = model_for(&c, 32);
    let signals: Vec<&[f64]> = c.records.iter().map(|r| r.ecg.signal.as_slice()).collect();
    let classes = names(&["absent p wave", "bundle branch block", "normal ecg"]);
    let leads = default_lead_names();
    assert_eq!(leads.len(), 12);
    let plain = zero_shot(&model, &signals, &classes).unwrap();
    let ens = ensemble_zero_shot(&model, &signals, &classes, &leads).unwrap();
    for i in 0..plain.rows() {
        for k in 0..plain.cols() {
            assert!(ens.get(i, k) >= plain.get(i, k));
            let mut best = plain.get(i, k);
            for lead in &leads {
                let q = zero_shot(&model, &[signals[i]], &[format!("{} in lead {lead}", classes[k])]).unwrap();
                best = best.max(q.get(0, 0));
            }
            assert_eq!(ens.get(i, k), best);
        }
    }
    let none = ensemble_zero_shot(&model, &signals, &classes, &[]).unwrap();
    assert_eq!(none, plain);
}

#[test]
fn labels_follow_the_requested_set() {
    let c = corpus(10, 5, 41);
    let (y, ids) = labels_for(&c, Split::Test, LabelSet::Features);
    assert_eq!(ids.len(), 5);
    assert_eq!(y.cols(), 8);
    for (row, &i) in ids.iter().enumerate() {
        for f in 0..8 {
            assert_eq!(y.get(row, f), c.records[i].ecg.true_features.contains(&f));
        }
    }
    let (y, _) = labels_for(&c, Split::Train, LabelSet::Diagnoses);
    assert_eq!(y.cols(), 6);
    assert_eq!(y.rows(), 10);
    assert!(matches!(LabelSet::parse("rhythm"), Err(Error::Config(_))));
}

fn toy(n: usize, d: usize, rng: &mut ChaCha8Rng, separable: bool) -> (Vec<Vec<f64>>, LabelMatrix) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let lab = [rng.random_bool(0.5), rng.random_bool(0.3)];
        let mut row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if separable {
            row[0] = if lab[0] { 2.0 } else { -2.0 } + row[0] * 0.1;
            row[1] = if lab[1] { 3.0 } else { -1.0 } + row[1] * 0.1;
        }
        x.push(row);
        y.push(lab.to_vec());
    }
    (x, LabelMatrix::new(names(&["first", "second"]), y).unwrap())
}

#[test]
fn probe_separates_separable_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (xs, ys) = toy(80, 6, &mut rng, true);
    let (xt, yt) = toy(80, 6, &mut rng, true);
    let (auc, warnings) = probe_embeddings(&xs, &ys, &xt, &yt, PROBE_STEPS, PROBE_LR).unwrap();
    assert_eq!(auc.macro_auc, 1.0);
    assert!(warnings.is_empty());
}

#[test]
fn probe_on_unrelated_labels_is_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let (xs, ys) = toy(200, 6, &mut rng, false);
    let (xt, yt) = toy(400, 6, &mut rng, false);
    let (auc, _) = probe_embeddings(&xs, &ys, &xt, &yt, PROBE_STEPS, PROBE_LR).unwrap();
    assert!((auc.macro_auc - 0.5).abs() <= 0.1, "{}", auc.macro_auc);
}

#[test]
fn constant_training_labels_are_skipped_with_a_warning() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let (xs, ys) = toy(30, 4, &mut rng, true);
    let rows: Vec<Vec<bool>> = (0..30).map(|i| vec![ys.get(i, 0), true]).collect();
    let ys = LabelMatrix::new(ys.class_names.clone(), rows).unwrap();
    let (xt, yt) = toy(30, 4, &mut rng, true);
    let (auc, warnings) = probe_embeddings(&xs, &ys, &xt, &yt, 50, PROBE_LR).unwrap();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("second"));
    assert_eq!(auc.skipped_classes, ["second"]);
}

#[test]
fn probing_leaves_the_encoder_untouched() {
    let c = corpus(40, 30, 61);
    let model = model_for(&c, 62);
    let before = model.clone();
    let results = linear_probe(&model, &c, LabelSet::Diagnoses, &[0.5, 1.0], 3, ProbeInput::E).unwrap();
    assert_eq!(model, before);
    assert_eq!(results.iter().map(|r| r.n_train).collect::<Vec<_>>(), [20, 40]);
    for r in &results {
        assert!(r.auc.macro_auc.is_finite());
    }
    let again = linear_probe(&model, &c, LabelSet::Diagnoses, &[0.5, 1.0], 3, ProbeInput::E).unwrap();
    assert_eq!(results, again);
    assert!(linear_probe(&model, &c, LabelSet::Diagnoses, &[0.01], 3, ProbeInput::E).is_err());
}

#[test]
fn retrieval_ranks_every_record_with_stable_ties() {
    let mut c = corpus(6, 2, 71);
    // records 2 and 5 share a signal and so score identically for any query
    c.records[5].ecg.signal = c.records[2].ecg.signal.clone();
    let model = model_for(&c, 72);
    let n = c.len();
    let all = retrieve(&model, "myocardial infarction", &c, n).unwrap();
    assert!(all.warning.is_none());
    let mut ids: Vec<usize> = all.hits.iter().map(|h| h.0).collect();
    let p2 = ids.iter().position(|&i| i == 2).unwrap();
    let p5 = ids.iter().position(|&i| i == 5).unwrap();
    assert_eq!(p5, p2 + 1);
    assert!(all.hits.windows(2).all(|w| w[0].1 >= w[1].1));
    ids.sort_unstable();
    assert_eq!(ids, (0..n).collect::<Vec<_>>());

    let clamped = retrieve(&model, "myocardial infarction", &c, n + 5).unwrap();
    assert_eq!(clamped.hits, all.hits);
    assert!(clamped.warning.is_some());
    assert!(matches!(retrieve(&model, "...", &c, 3), Err(Error::EmptyInput(_))));
    assert!(retrieve(&model, "normal ecg", &c, 0).is_err());
}

#[test]
fn embedding_export_has_one_column_per_dimension() {
    let c = corpus(1, 1, 81);
    let model = model_for(&c, 82);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    export_embeddings(&model, &c, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("id,split,dim_0,"));
    assert!(lines[0].ends_with(",dim_127"));
    for l in &lines {
        assert_eq!(l.split(',').count(), 130);
    }
    assert!(lines[1].starts_with("0,train,"));
    assert!(lines[3].starts_with("2,test,"));
}

#[test]
fn heatmap_is_symmetric_and_saturates_on_identical_reports() {
    let mut c = corpus(4, 1, 91);
    let model = model_for(&c, 92);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let ids = [3, 0, 1];
    export_similarity_heatmap(&model, &c, &ids, &path).unwrap();
    let cells: Vec<Vec<String>> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(cells[0], ["id", "3", "0", "1"]);
    for i in 1..4 {
        for j in 1..4 {
            assert_eq!(cells[i][j], cells[j][i]);
        }
    }

    for r in c.records.iter_mut() {
        r.report.text = "ECG shows normal ecg.".into();
    }
    let s = similarity_of(&model, &c, &[0, 1, 2, 3]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((s.get(i, j) - 1.0).abs() <= 1e-12);
        }
    }
    assert!(similarity_of(&model, &c, &[0, 99]).is_err());
}

#[test]
fn eval_report_serialises_the_documented_fields() {
    let p = Matrix::from_rows(&[vec![0.9], vec![0.1]]).unwrap();
    let y = LabelMatrix::new(names(&["a"]), vec![vec![true], vec![false]]).unwrap();
    let auc = macro_auc(&p, &y).unwrap();
    let report = EvalReport::new("zero-shot", b"bytes", auc, serde_json::json!({"labels": "features"}));
    let v = serde_json::to_value(&report).unwrap();
    for key in ["task", "checkpoint_digest", "per_class_auc", "macro_auc", "skipped_classes", "config"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["checkpoint_digest"].as_str().unwrap().len(), 64);
    assert_eq!(v["macro_auc"], 1.0);
}
