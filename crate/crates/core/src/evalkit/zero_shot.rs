//! Zero-shot scoring of ECGs against class-name prompts.

use crate::alignment::cosine_sim;
use crate::encoders::Model;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::proposer::{score_similarity, ScoreScale};

pub const DEFAULT_LEAD_NAMES: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

pub fn default_lead_names() -> Vec<String> {
    DEFAULT_LEAD_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Projected ECG embeddings, one row per signal.
pub fn ecg_embeddings(model: &Model, ecgs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    ecgs.iter().map(|s| Ok(model.embed_ecg(s)?.1)).collect()
}

fn prompt_embedding(model: &Model, prompt: &str) -> Result<Vec<f64>> {
    if model.tokenize(prompt).is_empty() {
        return Err(Error::EmptyInput(format!("class prompt {prompt:?} has no tokens")));
    }
    Ok(model.embed_text(prompt)?.1)
}

/// `P[i][c] = σ(sim(e_p_i, t_p_c))`, or `σ(t·sim + b)` on the calibrated
/// scale. Rows are independent per class and never normalised.
pub fn zero_shot_scaled(model: &Model, e_p: &[Vec<f64>], class_names: &[String], scale: ScoreScale) -> Result<Matrix> {
    if class_names.is_empty() {
        return Err(Error::EmptyInput("no class names".into()));
    }
    let prompts: Vec<Vec<f64>> = class_names
        .iter()
        .map(|c| prompt_embedding(model, c))
        .collect::<Result<_>>()?;
    let mut p = Matrix::zeros(e_p.len(), class_names.len());
    for (i, e) in e_p.iter().enumerate() {
        for (c, t) in prompts.iter().enumerate() {
            p.set(i, c, score_similarity(cosine_sim(e, t)?, scale, model));
        }
    }
    Ok(p)
}

pub fn zero_shot(model: &Model, ecgs: &[&[f64]], class_names: &[String]) -> Result<Matrix> {
    zero_shot_scaled(model, &ecg_embeddings(model, ecgs)?, class_names, ScoreScale::Literal)
}

/// The class name plus `"<class> in lead <x>"` per lead; max over the prompts.
pub fn ensemble_zero_shot_scaled(
    model: &Model,
    e_p: &[Vec<f64>],
    class_names: &[String],
    lead_names: &[String],
    scale: ScoreScale,
) -> Result<Matrix> {
    let mut best = zero_shot_scaled(model, e_p, class_names, scale)?;
    for lead in lead_names {
        let prompts: Vec<String> = class_names.iter().map(|c| format!("{c} in lead {lead}")).collect();
        let p = zero_shot_scaled(model, e_p, &prompts, scale)?;
        for i in 0..best.rows() {
            for c in 0..best.cols() {
                if p.get(i, c) > best.get(i, c) {
                    best.set(i, c, p.get(i, c));
                }
            }
        }
    }
    Ok(best)
}

pub fn ensemble_zero_shot(
    model: &Model,
    ecgs: &[&[f64]],
    class_names: &[String],
    lead_names: &[String],
) -> Result<Matrix> {
    ensemble_zero_shot_scaled(model, &ecg_embeddings(model, ecgs)?, class_names, lead_names, ScoreScale::Literal)
}
