//! Downstream evaluation: zero-shot scoring, prompt ensembling, macro AUC,
//! linear probing, retrieval and CSV exports.

mod auc;
mod probe;
mod retrieval;
mod zero_shot;

pub use auc::{class_auc, macro_auc, AucReport};
pub use probe::{linear_probe, probe_embeddings, ProbeInput, ProbeResult, PROBE_LR, PROBE_STEPS};
pub use retrieval::{export_embeddings, export_similarity_heatmap, retrieve, similarity_of, Retrieval};
pub use zero_shot::{
    default_lead_names, ecg_embeddings, ensemble_zero_shot, ensemble_zero_shot_scaled, zero_shot,
    zero_shot_scaled, DEFAULT_LEAD_NAMES,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{diagnosis_names, Corpus, Split, FEATURES};
use crate::encoders::Model;
use crate::error::{Error, Result};
use crate::proposer::ScoreScale;

/// Binary labels, one row per evaluated record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub class_names: Vec<String>,
    rows: Vec<Vec<bool>>,
}

impl LabelMatrix {
    pub fn new(class_names: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != class_names.len()) {
            return Err(Error::Shape(format!(
                "label row {i} has {} entries for {} classes",
                rows[i].len(),
                class_names.len()
            )));
        }
        Ok(Self { class_names, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, i: usize, c: usize) -> bool {
        self.rows[i][c]
    }

    pub fn column(&self, c: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    pub fn rows_subset(&self, idx: &[usize]) -> Self {
        Self {
            class_names: self.class_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn select(&self, classes: &[usize]) -> Self {
        Self {
            class_names: classes.iter().map(|&c| self.class_names[c].clone()).collect(),
            rows: self.rows.iter().map(|r| classes.iter().map(|&c| r[c]).collect()).collect(),
        }
    }
}

/// Diagnosis phrases (6 classes) or planted waveform features (8 classes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSet {
    Diagnoses,
    Features,
}

impl LabelSet {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "diagnoses" => Ok(Self::Diagnoses),
            "features" => Ok(Self::Features),
            other => Err(Error::Config(format!("unknown label set {other:?} (diagnoses or features)"))),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        match self {
            Self::Diagnoses => diagnosis_names().into_iter().map(String::from).collect(),
            Self::Features => FEATURES.iter().map(|f| f.name.to_string()).collect(),
        }
    }
}

/// Labels of one split and the record indices they belong to.
pub fn labels_for(corpus: &Corpus, split: Split, set: LabelSet) -> (LabelMatrix, Vec<usize>) {
    let ids = corpus.split_indices(split);
    let names = set.class_names();
    let rows = ids
        .iter()
        .map(|&i| {
            let r = &corpus.records[i];
            match set {
                LabelSet::Diagnoses => names.iter().map(|n| r.report.diagnoses.contains(n)).collect(),
                LabelSet::Features => (0..FEATURES.len()).map(|f| r.ecg.true_features.contains(&f)).collect(),
            }
        })
        .collect();
    (
        LabelMatrix {
            class_names: names,
            rows,
        },
        ids,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub fractions: Vec<f64>,
    pub lead_names: Vec<String>,
    pub probe_input: ProbeInput,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.01, 0.1, 1.0],
            lead_names: default_lead_names(),
            probe_input: ProbeInput::E,
        }
    }
}

/// Zero-shot macro AUC of one split.
pub fn zero_shot_auc(
    model: &Model,
    corpus: &Corpus,
    split: Split,
    set: LabelSet,
    ensemble: Option<&[String]>,
    scale: ScoreScale,
) -> Result<AucReport> {
    let (y, ids) = labels_for(corpus, split, set);
    if ids.is_empty() {
        return Err(Error::EmptyEvaluation(format!("{} split is empty", split.as_str())));
    }
    let signals: Vec<&[f64]> = ids.iter().map(|&i| corpus.records[i].ecg.signal.as_slice()).collect();
    let e_p = ecg_embeddings(model, &signals)?;
    let p = match ensemble {
        Some(leads) => ensemble_zero_shot_scaled(model, &e_p, &y.class_names, leads, scale)?,
        None => zero_shot_scaled(model, &e_p, &y.class_names, scale)?,
    };
    macro_auc(&p, &y)
}

/// Machine-readable evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub checkpoint_digest: String,
    pub per_class_auc: Vec<(String, f64)>,
    pub macro_auc: f64,
    pub skipped_classes: Vec<String>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn new(task: &str, checkpoint_bytes: &[u8], auc: AucReport, config: serde_json::Value) -> Self {
        Self {
            task: task.to_string(),
            checkpoint_digest: hex_digest(checkpoint_bytes),
            per_class_auc: auc.per_class,
            macro_auc: auc.macro_auc,
            skipped_classes: auc.skipped_classes,
            config,
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
