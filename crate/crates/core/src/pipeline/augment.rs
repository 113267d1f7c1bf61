//! Stage 2: propose, validate and append waveform features to train reports.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Checkpoint, MetricsLog, Stage};
use crate::corpus::{feature_by_name, Corpus, CorpusRecord, Split};
use crate::error::{Error, Result};
use crate::proposer::{augment_report, FeatureProposal, Proposer, ProposerConfig, ProposerMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCounts {
    pub proposed: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub records: usize,
    pub augmented_records: usize,
    pub failed_records: usize,
    pub proposed: usize,
    pub accepted: usize,
    /// Proposals naming a feature planted in the record's ECG.
    pub proposed_true: usize,
    pub accepted_true: usize,
    pub per_feature: BTreeMap<String, FeatureCounts>,
}

impl AugmentStats {
    pub fn raw_precision(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.proposed_true as f64 / self.proposed as f64)
    }

    pub fn accepted_precision(&self) -> Option<f64> {
        (self.accepted > 0).then(|| self.accepted_true as f64 / self.accepted as f64)
    }
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub corpus: Corpus,
    pub stats: AugmentStats,
    pub proposals: Vec<FeatureProposal>,
    /// Records left unchanged because proposal or validation failed.
    pub failures: Vec<(usize, String)>,
}

fn is_planted(record: &CorpusRecord, phrase: &str) -> bool {
    feature_by_name(phrase).is_some_and(|f| record.ecg.true_features.contains(&f.id))
}

/// Candidates for every record, fanned out over worker threads in llm mode.
fn propose_all(proposer: &Proposer, records: &[&CorpusRecord]) -> Vec<Result<Vec<String>>> {
    let workers = proposer.config().workers.min(records.len()).max(1);
    if proposer.config().mode != ProposerMode::Llm || workers == 1 {
        return records.iter().map(|r| proposer.propose(r)).collect();
    }
    let chunk = records.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|r| proposer.propose(r)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("proposal worker panicked"))
            .collect()
    })
}

pub fn augment_corpus(
    corpus: &Corpus,
    coarse: &Checkpoint,
    cfg: &ProposerConfig,
    seed: u64,
    log: &mut MetricsLog,
) -> Result<AugmentOutcome> {
    augment_with(corpus, coarse, &Proposer::new(cfg, seed)?, log)
}

/// Train-split reports gain the accepted features; everything else is copied.
pub fn augment_with(
    corpus: &Corpus,
    coarse: &Checkpoint,
    proposer: &Proposer,
    log: &mut MetricsLog,
) -> Result<AugmentOutcome> {
    if coarse.stage != Stage::Clep {
        return Err(Error::Config("augmentation needs the stage-1 (clep) checkpoint".into()));
    }
    let model = &coarse.model;
    let train: Vec<&CorpusRecord> = corpus.split(Split::Train).collect();
    let candidates = propose_all(proposer, &train);

    let mut out = corpus.clone();
    let mut stats = AugmentStats {
        records: train.len(),
        ..Default::default()
    };
    let mut proposals = Vec::new();
    let mut failures = Vec::new();
    let mut cache = HashMap::new();
    let index: HashMap<usize, usize> = out.records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    for (record, cands) in train.iter().zip(candidates) {
        let checked = cands.and_then(|c| proposer.validate(model, record, &c, &mut cache));
        let checked = match checked {
            Ok(v) => v,
            Err(e) => {
                stats.failed_records += 1;
                failures.push((record.id, e.to_string()));
                continue;
            }
        };
        let mut accepted = Vec::new();
        for p in &checked {
            let planted = is_planted(record, &p.candidate);
            let counts = stats.per_feature.entry(p.candidate.clone()).or_default();
            counts.proposed += 1;
            stats.proposed += 1;
            stats.proposed_true += usize::from(planted);
            if p.accepted {
                counts.accepted += 1;
                stats.accepted += 1;
                stats.accepted_true += usize::from(planted);
                accepted.push(p.candidate.clone());
            }
        }
        let target = &mut out.records[index[&record.id]];
        let text = augment_report(&target.report.text, &accepted);
        if text != target.report.text {
            stats.augmented_records += 1;
            target.report.text = text;
            target
                .report
                .mentioned_features
                .extend(accepted.iter().filter_map(|a| feature_by_name(a).map(|f| f.id)));
        }
        proposals.extend(checked);
    }
    log.push(json!({
        "kind": "augmentation",
        "stats": stats,
        "failures": failures.iter().map(|(id, e)| json!({"record": id, "error": e})).collect::<Vec<_>>(),
    }));
    Ok(AugmentOutcome {
        corpus: out,
        stats,
        proposals,
        failures,
    })
}
