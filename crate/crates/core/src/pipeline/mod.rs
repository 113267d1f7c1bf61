//! Three-stage orchestration: contrastive training on the original reports,
//! feature augmentation of the train split, continued training.

mod augment;
mod checkpoint;
mod train;

pub use augment::{augment_corpus, augment_with, AugmentOutcome, AugmentStats, FeatureCounts};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use train::{build_vocab, epoch_order, train_stage, StageInit};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::LossVariant;
use crate::corpus::{write_atomic, Corpus};
use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::proposer::ProposerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clep,
    Fgclep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage3: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_frac: f64,
    pub lambda: f64,
    pub loss_variant: LossVariant,
    /// Stage 3 starts from freshly initialised parameters.
    pub from_scratch: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            epochs_stage1: 10,
            epochs_stage3: 3,
            base_lr: 2e-5,
            weight_decay: 1e-4,
            warmup_frac: 0.1,
            lambda: 0.5,
            loss_variant: LossVariant::SigmoidFnm,
            from_scratch: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "contrastive training needs batch_size >= 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs_stage1 == 0 {
            return Err(Error::Config("epochs_stage1 must be at least 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Config(format!("warmup_frac must lie in [0, 1], got {}", self.warmup_frac)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// JSON-lines metrics: one entry per optimizer step, one per augmentation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub entries: Vec<serde_json::Value>,
}

impl MetricsLog {
    pub fn push(&mut self, entry: serde_json::Value) {
        self.entries.push(entry);
    }

    /// Losses logged for `stage`, in step order.
    pub fn losses(&self, stage: Stage) -> Vec<(usize, f64)> {
        let tag = serde_json::to_value(stage).expect("stage serializes");
        self.entries
            .iter()
            .filter(|e| e["kind"] == "step" && e["stage"] == tag)
            .filter_map(|e| Some((e["epoch"].as_u64()? as usize, e["loss"].as_f64()?)))
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").expect("writing to a Vec");
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_jsonl()?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub clep: Checkpoint,
    pub fgclep: Checkpoint,
    pub augmentation: AugmentOutcome,
    pub log: MetricsLog,
}

/// Stage 1 on the original reports, stage 2 augmentation, stage 3 on the
/// augmented corpus (continuing from stage 1 unless `from_scratch`).
pub fn run_fgclep(
    corpus: &Corpus,
    model: &ModelConfig,
    cfg: &TrainConfig,
    proposer: &ProposerConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    model.validate()?;
    proposer.validate()?;
    let mut log = MetricsLog::default();
    let clep = train_stage(corpus, StageInit::Fresh(model), cfg, cfg.epochs_stage1, Stage::Clep, &mut log)?;
    let augmentation = augment_corpus(corpus, &clep, proposer, cfg.seed, &mut log)?;
    let init = if cfg.from_scratch {
        StageInit::Reinit(&clep)
    } else {
        StageInit::From(&clep)
    };
    let fgclep = match init {
        // nothing to train: the continuation is the coarse model itself
        StageInit::From(ck) if cfg.epochs_stage3 == 0 => Checkpoint {
            stage: Stage::Fgclep,
            ..ck.clone()
        },
        _ => train_stage(
            &augmentation.corpus,
            init,
            cfg,
            cfg.epochs_stage3,
            Stage::Fgclep,
            &mut log,
        )?,
    };
    Ok(RunOutcome {
        clep,
        fgclep,
        augmentation,
        log,
    })
}
