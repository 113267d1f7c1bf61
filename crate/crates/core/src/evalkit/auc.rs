//! Per-class ROC AUC from midranks and its macro average.

use serde::{Deserialize, Serialize};

use super::LabelMatrix;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// AUC of one score column, ties counted ½. `None` unless both label values occur.
pub fn class_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // 1-based midranks: a tie group spanning ranks lo..=hi gets (lo + hi) / 2
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += mid * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub macro_auc: f64,
    /// Class name and its AUC; skipped classes are absent.
    pub per_class: Vec<(String, f64)>,
    pub skipped_classes: Vec<String>,
}

pub fn macro_auc(scores: &Matrix, labels: &LabelMatrix) -> Result<AucReport> {
    if scores.rows() != labels.rows() || scores.cols() != labels.cols() {
        return Err(Error::Shape(format!(
            "scores are {}x{}, labels {}x{}",
            scores.rows(),
            scores.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..scores.cols() {
        let col: Vec<f64> = (0..scores.rows()).map(|i| scores.get(i, c)).collect();
        match class_auc(&col, &labels.column(c)) {
            Some(a) => per_class.push((labels.class_names[c].clone(), a)),
            None => skipped.push(labels.class_names[c].clone()),
        }
    }
    if per_class.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "no class has both positive and negative examples (skipped: {})",
            skipped.join(", ")
        )));
    }
    let macro_auc = per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len() as f64;
    Ok(AucReport {
        macro_auc,
        per_class,
        skipped_classes: skipped,
    })
}
