//! Paired ECG/report corpora: synthesis with planted waveform features,
//! on-disk persistence, and import of external pairs.

mod features;
mod io;
mod report;
mod synth;

pub use features::{
    diagnosis_names, feature, feature_by_name, find_rule, rule_map, validate_features,
    DiagnosisRule, FeatureSet, WaveformFeature, ABSENT_P, FEATURES, INVERTED_T, IRREGULAR_RR,
    NORMAL_ECG, PROLONGED_PR, Q_WAVE, ST_ELEVATION, TALL_R, WIDE_QRS,
};
pub use io::{
    import_pairs, load_corpus, manifest_path, save_corpus, signal_path, write_signal_blob,
    ImportOutcome, SIG_MAGIC,
};
pub(crate) use io::write_atomic;
pub use report::{render_report, word_count, ReportText, MIN_REPORT_WORDS};
pub use synth::{
    beat_times, lead_weight, synth_ecg, BeatTemplate, Component, EcgRecord, SynthConfig,
    INVERTED_T_LEADS, ST_PLATEAU, TRUNCATION_SIGMAS,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub id: usize,
    pub split: Split,
    pub ecg: EcgRecord,
    pub report: ReportText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub p_mention: f64,
    pub seed: u64,
    pub lead_count: usize,
    pub sample_rate: f64,
    pub duration: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_valid: 200,
            n_test: 500,
            p_mention: 0.2,
            seed: 0,
            lead_count: 12,
            sample_rate: 100.0,
            duration: 10.0,
        }
    }
}

impl CorpusConfig {
    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            sample_rate: self.sample_rate,
            duration: self.duration,
            lead_count: self.lead_count,
            ..SynthConfig::default()
        }
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_valid + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_valid == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train, n_valid and n_test must all be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p_mention) {
            return Err(Error::Config(format!("p_mention {} outside [0, 1]", self.p_mention)));
        }
        self.synth().validate()
    }

    fn split_of(&self, index: usize) -> Split {
        if index < self.n_train {
            Split::Train
        } else if index < self.n_train + self.n_valid {
            Split::Valid
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    /// Present for synthesized corpora; not persisted on disk.
    pub generator: Option<CorpusConfig>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].split == split)
            .collect()
    }

    pub fn by_id(&self, id: usize) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// Generate a full corpus. Record `i` is seeded with `seed + i`, so every
/// record can be regenerated on its own.
pub fn synth_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let rules = rule_map();
    let synth_cfg = cfg.synth();
    let mut records = Vec::with_capacity(cfg.total());
    for i in 0..cfg.total() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // separate stream from the signal generator, which uses stream 0
        rng.set_stream(1);
        let rule = &rules[rng.random_range(0..rules.len())];
        let bundle = &rule.bundles[rng.random_range(0..rule.bundles.len())];
        let mentioned: FeatureSet = bundle
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < cfg.p_mention)
            .collect();
        let ecg = synth_ecg(bundle, seed, &synth_cfg)?;
        let report = render_report(&[rule.diagnosis.to_string()], &mentioned)?;
        records.push(CorpusRecord {
            id: i,
            split: cfg.split_of(i),
            ecg,
            report,
        });
    }
    Ok(Corpus {
        records,
        generator: Some(cfg.clone()),
    })
}
