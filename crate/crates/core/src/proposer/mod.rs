//! Candidate waveform features per report, their validation against the
//! coarse model, and report augmentation.

mod llm;
mod oracle;

pub use llm::{
    parse_feature_list, propose_llm, ChatBackend, ChatMessage, FixtureChat, HttpChat, ENDPOINT_ENV,
    FEATURE_PROMPT, KEY_ENV, LIST_PROMPT,
};
pub use oracle::{oracle_rng, propose_oracle};

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::alignment::cosine_sim;
use crate::corpus::{rule_map, CorpusRecord, DiagnosisRule};
use crate::encoders::Model;
use crate::error::{Error, Result};
use crate::numerics::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposerMode {
    Oracle,
    Llm,
    /// Proposes nothing; stage 3 then trains on the original reports.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalSource {
    Oracle,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub mode: ProposerMode,
    /// Acceptance needs score strictly above this.
    pub threshold: f64,
    /// Score with the learned scale and bias, σ(t·sim + b), instead of σ(sim).
    pub calibrated: bool,
    pub p_halluc: f64,
    /// Falls back to `FGCLEP_LLM_ENDPOINT`.
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    pub retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    /// Replies file for the offline mock. Takes precedence over the endpoint.
    pub fixture: Option<PathBuf>,
    pub workers: usize,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            mode: ProposerMode::Oracle,
            threshold: 0.95,
            calibrated: true,
            p_halluc: 0.3,
            endpoint: None,
            model: "meta-llama/Meta-Llama-3-8B-Instruct".into(),
            timeout_s: 60.0,
            retries: 3,
            backoff_ms: 500,
            fixture: None,
            workers: 4,
        }
    }
}

impl ProposerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.p_halluc) {
            return Err(Error::Config(format!("p_halluc must lie in [0, 1], got {}", self.p_halluc)));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::Config(format!("timeout_s must be > 0, got {}", self.timeout_s)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn score_scale(&self) -> ScoreScale {
        if self.calibrated {
            ScoreScale::Calibrated
        } else {
            ScoreScale::Literal
        }
    }

    /// Chat backend for llm mode: the fixture if set, otherwise HTTP.
    pub fn chat_backend(&self) -> Result<Box<dyn ChatBackend>> {
        if let Some(path) = &self.fixture {
            return Ok(Box::new(FixtureChat::load(path)?));
        }
        let endpoint = match &self.endpoint {
            Some(e) => e.clone(),
            None => std::env::var(ENDPOINT_ENV).map_err(|_| {
                Error::Config(format!("llm mode needs an endpoint, a fixture or {ENDPOINT_ENV}"))
            })?,
        };
        Ok(Box::new(HttpChat::new(
            &endpoint,
            &self.model,
            std::env::var(KEY_ENV).ok(),
            Duration::from_secs_f64(self.timeout_s),
            self.retries,
            Duration::from_millis(self.backoff_ms),
        )))
    }
}

/// Which score the threshold applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreScale {
    /// σ(sim), confined to [0.269, 0.731].
    Literal,
    /// σ(t·sim + b) with the model's learned scale and bias.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProposal {
    pub report_id: usize,
    pub candidate: String,
    pub source: ProposalSource,
    pub score: f64,
    pub accepted: bool,
}

pub fn score_similarity(sim: f64, scale: ScoreScale, model: &Model) -> f64 {
    match scale {
        ScoreScale::Literal => sigmoid(sim),
        ScoreScale::Calibrated => sigmoid(model.logit_scale() * sim + model.logit_bias()),
    }
}

/// Scores one phrase against one ECG embedding.
pub fn validate_feature(
    model: &Model,
    e_p: &[f64],
    report_id: usize,
    phrase: &str,
    source: ProposalSource,
    threshold: f64,
    scale: ScoreScale,
) -> Result<FeatureProposal> {
    let (_, t_p) = model.embed_text(phrase)?;
    let score = score_similarity(cosine_sim(e_p, &t_p)?, scale, model);
    Ok(FeatureProposal {
        report_id,
        candidate: phrase.to_string(),
        source,
        score,
        accepted: score > threshold,
    })
}

/// Appends `" Noted <phrase>."` per phrase not already in the text.
pub fn augment_report(text: &str, accepted: &[String]) -> String {
    let mut out = text.to_string();
    for p in accepted {
        if !out.contains(p.as_str()) {
            out.push_str(" Noted ");
            out.push_str(p);
            out.push('.');
        }
    }
    out
}

/// Proposal source plus a per-phrase text-embedding cache for validation.
pub struct Proposer {
    cfg: ProposerConfig,
    rules: Vec<DiagnosisRule>,
    seed: u64,
    chat: Option<Box<dyn ChatBackend>>,
}

impl Proposer {
    /// `seed` drives the oracle's hallucination draws.
    pub fn new(cfg: &ProposerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let chat = match cfg.mode {
            ProposerMode::Llm => Some(cfg.chat_backend()?),
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            rules: rule_map(),
            seed,
            chat,
        })
    }

    pub fn with_backend(cfg: &ProposerConfig, backend: Box<dyn ChatBackend>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: ProposerConfig {
                mode: ProposerMode::Llm,
                ..cfg.clone()
            },
            rules: rule_map(),
            seed: 0,
            chat: Some(backend),
        })
    }

    pub fn config(&self) -> &ProposerConfig {
        &self.cfg
    }

    pub fn source(&self) -> ProposalSource {
        match self.cfg.mode {
            ProposerMode::Llm => ProposalSource::Llm,
            _ => ProposalSource::Oracle,
        }
    }

    pub fn propose(&self, record: &CorpusRecord) -> Result<Vec<String>> {
        if self.cfg.mode == ProposerMode::None {
            return Ok(Vec::new());
        }
        match &self.chat {
            None => propose_oracle(
                &record.report,
                &self.rules,
                self.cfg.p_halluc,
                &mut oracle_rng(self.seed, record.id),
            ),
            Some(chat) => propose_llm(&record.report.text, chat.as_ref()),
        }
    }

    /// Scores every candidate against the record's ECG. Phrase embeddings are
    /// memoised in `cache`, which must belong to `model`.
    pub fn validate(
        &self,
        model: &Model,
        record: &CorpusRecord,
        candidates: &[String],
        cache: &mut HashMap<String, Vec<f64>>,
    ) -> Result<Vec<FeatureProposal>> {
        let (_, e_p) = model.embed_ecg(&record.ecg.signal)?;
        let scale = self.cfg.score_scale();
        let mut out = Vec::with_capacity(candidates.len());
        for c in candidates {
            if !cache.contains_key(c) {
                let (_, t_p) = model.embed_text(c)?;
                cache.insert(c.clone(), t_p);
            }
            let score = score_similarity(cosine_sim(&e_p, &cache[c])?, scale, model);
            out.push(FeatureProposal {
                report_id: record.id,
                candidate: c.clone(),
                source: self.source(),
                score,
                accepted: score > self.cfg.threshold,
            });
        }
        Ok(out)
    }
}
