//! The fixed waveform-feature library and the diagnosis rule map.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Set of waveform-feature ids, iterated in ascending id order.
pub type FeatureSet = BTreeSet<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveformFeature {
    pub id: usize,
    pub key: &'static str,
    pub name: &'static str,
}

pub const PROLONGED_PR: usize = 0;
pub const INVERTED_T: usize = 1;
pub const ST_ELEVATION: usize = 2;
pub const WIDE_QRS: usize = 3;
pub const ABSENT_P: usize = 4;
pub const IRREGULAR_RR: usize = 5;
pub const TALL_R: usize = 6;
pub const Q_WAVE: usize = 7;

pub const FEATURES: [WaveformFeature; 8] = [
    WaveformFeature { id: PROLONGED_PR, key: "prolonged_pr", name: "prolonged pr interval" },
    WaveformFeature { id: INVERTED_T, key: "inverted_t", name: "inverted t wave" },
    WaveformFeature { id: ST_ELEVATION, key: "st_elevation", name: "st elevation" },
    WaveformFeature { id: WIDE_QRS, key: "wide_qrs", name: "wide qrs complex" },
    WaveformFeature { id: ABSENT_P, key: "absent_p", name: "absent p wave" },
    WaveformFeature { id: IRREGULAR_RR, key: "irregular_rr", name: "irregular rr interval" },
    WaveformFeature { id: TALL_R, key: "tall_r", name: "tall r wave" },
    WaveformFeature { id: Q_WAVE, key: "q_wave", name: "pathological q wave" },
];

pub fn feature(id: usize) -> Result<&'static WaveformFeature> {
    FEATURES.get(id).ok_or(Error::InvalidFeature(id))
}

/// Library entry whose canonical phrase equals `phrase` (case-insensitive).
pub fn feature_by_name(phrase: &str) -> Option<&'static WaveformFeature> {
    let p = phrase.trim().to_lowercase();
    FEATURES.iter().find(|f| f.name == p)
}

pub fn validate_features(set: &FeatureSet) -> Result<()> {
    match set.iter().find(|&&id| id >= FEATURES.len()) {
        Some(&bad) => Err(Error::InvalidFeature(bad)),
        None => Ok(()),
    }
}

/// One diagnosis and its alternative feature bundles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosisRule {
    pub diagnosis: &'static str,
    pub bundles: Vec<FeatureSet>,
}

impl DiagnosisRule {
    /// Union of the features over every bundle.
    pub fn feature_union(&self) -> FeatureSet {
        self.bundles.iter().flatten().copied().collect()
    }
}

pub const NORMAL_ECG: &str = "normal ecg";

fn bundle(ids: &[usize]) -> FeatureSet {
    ids.iter().copied().collect()
}

/// The six-diagnosis rule map. Several diagnoses admit more than one bundle
/// and several features are shared across diagnoses.
pub fn rule_map() -> Vec<DiagnosisRule> {
    vec![
        DiagnosisRule { diagnosis: NORMAL_ECG, bundles: vec![bundle(&[])] },
        DiagnosisRule { diagnosis: "first degree av block", bundles: vec![bundle(&[PROLONGED_PR])] },
        DiagnosisRule {
            diagnosis: "atrial fibrillation",
            bundles: vec![bundle(&[ABSENT_P, IRREGULAR_RR])],
        },
        DiagnosisRule {
            diagnosis: "myocardial infarction",
            bundles: vec![bundle(&[ST_ELEVATION, INVERTED_T]), bundle(&[Q_WAVE, INVERTED_T])],
        },
        DiagnosisRule {
            diagnosis: "bundle branch block",
            bundles: vec![bundle(&[WIDE_QRS]), bundle(&[WIDE_QRS, TALL_R])],
        },
        DiagnosisRule {
            diagnosis: "ventricular hypertrophy",
            bundles: vec![bundle(&[TALL_R]), bundle(&[TALL_R, ST_ELEVATION])],
        },
    ]
}

pub fn diagnosis_names() -> Vec<&'static str> {
    rule_map().iter().map(|r| r.diagnosis).collect()
}

pub fn find_rule<'a>(rules: &'a [DiagnosisRule], diagnosis: &str) -> Result<&'a DiagnosisRule> {
    let d = diagnosis.trim().to_lowercase();
    rules
        .iter()
        .find(|r| r.diagnosis == d)
        .ok_or_else(|| Error::UnknownDiagnosis(diagnosis.to_string()))
}
