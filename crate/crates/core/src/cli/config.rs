//! The JSON run configuration and `--set` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::CorpusConfig;
use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::evalkit::EvalConfig;
use crate::pipeline::TrainConfig;
use crate::proposer::ProposerConfig;

/// Every section and key has a default; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub proposer: ProposerConfig,
    pub eval: EvalConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.train.validate()?;
        self.proposer.validate()?;
        self.model.validate()?;
        if self.corpus.lead_count != self.model.ecg.leads {
            return Err(Error::Config(format!(
                "corpus.lead_count {} does not match model.ecg.leads {}",
                self.corpus.lead_count, self.model.ecg.leads
            )));
        }
        Ok(())
    }

    /// Defaults, then the file, then each `section.key=value` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("invalid run configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `train.base_lr=1e-3` sets a number, `proposer.mode=llm` a string; values
/// that parse as JSON keep their JSON type.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects section.key=value, got {assignment:?}")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("--set expects section.key=value, got {assignment:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for k in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{path}: {k} is not a section")))?;
        node = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("{path}: parent is not a section")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
