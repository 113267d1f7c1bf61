//! Linear probing on frozen ECG embeddings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{labels_for, macro_auc, AucReport, LabelMatrix, LabelSet};
use crate::corpus::{Corpus, Split};
use crate::encoders::Model;
use crate::error::{Error, Result};
use crate::numerics::{adamw_step, sigmoid, AdamWConfig, Matrix, OptimizerState, ParamStore, Tensor};

pub const PROBE_STEPS: usize = 500;
pub const PROBE_LR: f64 = 1e-2;

/// Which embedding the probe reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeInput {
    /// Encoder output before the projection head.
    #[default]
    E,
    /// Projected embedding.
    EP,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub fraction: f64,
    pub n_train: usize,
    pub auc: AucReport,
    pub warnings: Vec<String>,
}

/// Column-wise mean and spread of `x`; zero spread maps to 1.
fn standardizer(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for row in x {
        for ((s, v), m) in sd.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in sd.iter_mut() {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

fn apply(x: &[Vec<f64>], mean: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| r.iter().zip(mean).zip(sd).map(|((v, m), s)| (v - m) / s).collect())
        .collect()
}

/// Trains one affine classifier with per-class sigmoid cross-entropy on
/// `train_x` and reports macro AUC on `test_x`. Classes constant in the
/// training labels are skipped with a warning.
pub fn probe_embeddings(
    train_x: &[Vec<f64>],
    train_y: &LabelMatrix,
    test_x: &[Vec<f64>],
    test_y: &LabelMatrix,
    steps: usize,
    lr: f64,
) -> Result<(AucReport, Vec<String>)> {
    if train_x.is_empty() || train_x.len() != train_y.rows() || test_x.len() != test_y.rows() {
        return Err(Error::Shape("probe inputs and labels disagree in length".into()));
    }
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for c in 0..train_y.cols() {
        let pos = train_y.column(c).iter().filter(|&&v| v).count();
        if pos == 0 || pos == train_y.rows() {
            warnings.push(format!(
                "class {:?} is single-valued in the probe training subset; skipped",
                train_y.class_names[c]
            ));
        } else {
            kept.push(c);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyEvaluation("every class is single-valued in the probe subset".into()));
    }
    let (mean, sd) = standardizer(train_x);
    let xs = apply(train_x, &mean, &sd);
    let xt = apply(test_x, &mean, &sd);
    let d = xs[0].len();
    let k = kept.len();
    let n = xs.len() as f64;

    let mut params = ParamStore::new();
    params.insert("w", Tensor::zeros(&[k, d]))?;
    params.insert("b", Tensor::zeros(&[k]))?;
    let mut opt = OptimizerState::new(
        &params,
        AdamWConfig {
            lr,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        },
    );
    for _ in 0..steps {
        let mut grads = params.zeros_like();
        {
            let w = params.get("w").data();
            let b = params.get("b").data();
            let (gw, gb) = grads.pair_mut("w", "b");
            let (gw, gb) = (gw.data_mut(), gb.data_mut());
            for (i, x) in xs.iter().enumerate() {
                for (j, &c) in kept.iter().enumerate() {
                    let z: f64 = b[j] + w[j * d..(j + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                    let y = if train_y.get(i, c) { 1.0 } else { 0.0 };
                    let g = (sigmoid(z) - y) / n;
                    gb[j] += g;
                    for (gwv, v) in gw[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gwv += g * v;
                    }
                }
            }
        }
        adamw_step(&mut params, &grads, &mut opt, lr)?;
    }

    let w = params.get("w").data();
    let b = params.get("b").data();
    let mut scores = Matrix::zeros(xt.len(), k);
    for (i, x) in xt.iter().enumerate() {
        for j in 0..k {
            let z: f64 = b[j] + w[j * d..(j + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            scores.set(i, j, sigmoid(z));
        }
    }
    let sub = test_y.select(&kept);
    let mut report = macro_auc(&scores, &sub)?;
    let mut skipped: Vec<String> = (0..train_y.cols())
        .filter(|c| !kept.contains(c))
        .map(|c| train_y.class_names[c].clone())
        .collect();
    skipped.extend(report.skipped_classes);
    report.skipped_classes = skipped;
    Ok((report, warnings))
}

/// Probes the frozen encoder on nested seeded subsamples of the train split
/// and evaluates on the test split.
pub fn linear_probe(
    model: &Model,
    corpus: &Corpus,
    labels: LabelSet,
    fractions: &[f64],
    seed: u64,
    input: ProbeInput,
) -> Result<Vec<ProbeResult>> {
    let embed = |split: Split| -> Result<(Vec<Vec<f64>>, LabelMatrix)> {
        let (y, ids) = labels_for(corpus, split, labels);
        let mut x = Vec::with_capacity(ids.len());
        for &i in &ids {
            let (e, e_p) = model.embed_ecg(&corpus.records[i].ecg.signal)?;
            x.push(match input {
                ProbeInput::E => e,
                ProbeInput::EP => e_p,
            });
        }
        Ok((x, y))
    };
    let (train_x, train_y) = embed(Split::Train)?;
    let (test_x, test_y) = embed(Split::Test)?;
    if test_x.is_empty() {
        return Err(Error::EmptyEvaluation("test split is empty".into()));
    }
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut out = Vec::new();
    for &f in fractions {
        let n = (f * train_x.len() as f64).round() as usize;
        if !(f > 0.0 && f <= 1.0) || n < 2 {
            return Err(Error::Config(format!(
                "probe fraction {f} of {} train records leaves fewer than 2",
                train_x.len()
            )));
        }
        let pick = &order[..n];
        let xs: Vec<Vec<f64>> = pick.iter().map(|&i| train_x[i].clone()).collect();
        let ys = train_y.rows_subset(pick);
        let (auc, warnings) = probe_embeddings(&xs, &ys, &test_x, &test_y, PROBE_STEPS, PROBE_LR)?;
        out.push(ProbeResult {
            fraction: f,
            n_train: n,
            auc,
            warnings,
        });
    }
    Ok(out)
}
