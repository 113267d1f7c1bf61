mod common;

use fgclep::alignment::{BatchItem, ContrastiveObjective, LossVariant};
use fgclep::numerics::{grad_check_detailed, GradCheckReport};

/// Checks every tensor of the model at a random batch of corpus records.
///
/// Biases get small random offsets first: at exactly zero, units whose inputs
/// are all dead sit on the ReLU kink for every bias probe.
pub fn check(batch: usize, variant: LossVariant, seed: u64) -> GradCheckReport {
    let corpus = common::small_corpus(batch, seed);
    let mut model = common::model_for(&corpus, seed);
    common::offset_biases(&mut model.params, seed + 100);
    let tokens = common::token_lists(&model, &corpus);
    let items: Vec<BatchItem> = corpus.records[..batch]
        .iter()
        .zip(&tokens)
        .map(|(r, t)| BatchItem {
            signal: &r.ecg.signal,
            tokens: t,
        })
        .collect();
    let obj = ContrastiveObjective::new(&model.config, items, variant, 0.5)
        .freeze_targets(&model.params)
        .unwrap();
    let report = grad_check_detailed(&model.params, &obj, 1e-5, 20, seed).unwrap();
    let names: std::collections::BTreeSet<&str> = report.checks.iter().map(|c| c.tensor.as_str()).collect();
    assert_eq!(names.len(), model.params.len(), "skips {}", report.kink_skips);
    report
}

fn assert_close(report: &GradCheckReport, what: &str) {
    let w = report.worst().unwrap();
    assert!(
        w.rel_err <= 1e-4,
        "{what}: {} [{}] analytic {} numeric {} rel {}",
        w.tensor,
        w.index,
        w.analytic,
        w.numeric,
        w.rel_err
    );
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    for seed in 1001..=1003 {
        for b in [1, 2, 4] {
            assert_close(&check(b, LossVariant::SigmoidFnm, seed), &format!("seed {seed} B={b}"));
        }
    }
}

#[test]
fn sigmoid_only_gradients_match_finite_differences() {
    assert_close(&check(2, LossVariant::Sigmoid, 1001), "sigmoid");
}

#[test]
fn infonce_gradients_match_finite_differences() {
    assert_close(&check(2, LossVariant::InfoNce, 1001), "infonce");
}
