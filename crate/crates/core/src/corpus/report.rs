//! Templated report text.

use serde::{Deserialize, Serialize};

use super::features::{feature, FeatureSet};
use crate::error::Result;

/// Minimum word count a report needs to survive cleaning.
pub const MIN_REPORT_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportText {
    pub text: String,
    pub mentioned_features: FeatureSet,
    pub diagnoses: Vec<String>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// `"ECG shows <d1>[ and <d2>…]."` followed by one `"Noted <feature>."`
/// sentence per mentioned feature in id order.
pub fn render_report(diagnoses: &[String], mentioned: &FeatureSet) -> Result<ReportText> {
    let mut text = format!("ECG shows {}.", diagnoses.join(" and "));
    for &id in mentioned {
        text.push_str(" Noted ");
        text.push_str(feature(id)?.name);
        text.push('.');
    }
    Ok(ReportText {
        text,
        mentioned_features: mentioned.clone(),
        diagnoses: diagnoses.to_vec(),
    })
}
