//! One contrastive training stage.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{Checkpoint, MetricsLog, Stage, TrainConfig};
use crate::alignment::{BatchItem, ContrastiveObjective};
use crate::corpus::{Corpus, Split};
use crate::encoders::{Model, ModelConfig, Vocab};
use crate::error::{Error, Result};
use crate::numerics::{adamw_step, lr_at, AdamWConfig, OptimizerState};

/// Where a stage's parameters come from.
#[derive(Debug, Clone, Copy)]
pub enum StageInit<'a> {
    /// New vocabulary from the train split and parameters from the init scheme.
    Fresh(&'a ModelConfig),
    /// Continue from a checkpoint's parameters and vocabulary.
    From(&'a Checkpoint),
    /// The checkpoint's configuration and vocabulary, re-initialised parameters.
    Reinit(&'a Checkpoint),
}

pub fn build_vocab(corpus: &Corpus, cfg: &ModelConfig) -> Vocab {
    Vocab::build(corpus.split(Split::Train).map(|r| r.report.text.as_str()), cfg.text.max_vocab)
}

/// Per-epoch batch order, a function of the master seed and the epoch only.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x4550_4f43_0000_0000 | epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains for `epochs` over the train split with a fresh optimizer and a
/// warmup + cosine schedule spanning this stage alone.
pub fn train_stage(
    corpus: &Corpus,
    init: StageInit<'_>,
    cfg: &TrainConfig,
    epochs: usize,
    stage: Stage,
    log: &mut MetricsLog,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let mut model = match init {
        StageInit::Fresh(mc) => Model::init(mc.clone(), build_vocab(corpus, mc), cfg.seed)?,
        StageInit::From(ck) => ck.model.clone(),
        StageInit::Reinit(ck) => Model::init(ck.model.config.clone(), ck.model.vocab.clone(), cfg.seed)?,
    };
    let train: Vec<usize> = corpus.split_indices(Split::Train);
    if train.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "train split has {} records, fewer than batch_size {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let tokens: Vec<Vec<usize>> = train
        .iter()
        .map(|&i| model.tokenize(&corpus.records[i].report.text))
        .collect();
    let steps_per_epoch = train.len() / cfg.batch_size;
    let total = epochs * steps_per_epoch;
    let mut opt = OptimizerState::new(
        &model.params,
        AdamWConfig {
            lr: cfg.base_lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let mut step = 0;
    for epoch in 0..epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch);
        for batch in order.chunks_exact(cfg.batch_size) {
            step += 1;
            let items: Vec<BatchItem> = batch
                .iter()
                .map(|&k| BatchItem {
                    signal: &corpus.records[train[k]].ecg.signal,
                    tokens: &tokens[k],
                })
                .collect();
            let objective = ContrastiveObjective::new(&model.config, items, cfg.loss_variant, cfg.lambda);
            let at_step = |source: Error| Error::TrainingStep {
                step,
                source: Box::new(source),
            };
            let (loss, grads) = objective.evaluate(&model.params, true).map_err(at_step)?;
            let grads = grads.expect("gradient requested");
            if !loss.total.is_finite() {
                return Err(at_step(Error::NumericFailure {
                    tensor: "loss".into(),
                }));
            }
            if let Some(name) = grads.first_non_finite() {
                return Err(at_step(Error::NumericFailure {
                    tensor: format!("grad[{name}]"),
                }));
            }
            let lr = lr_at(step, total, cfg.base_lr, cfg.warmup_frac);
            adamw_step(&mut model.params, &grads, &mut opt, lr).map_err(at_step)?;
            if let Some(name) = model.params.first_non_finite() {
                return Err(at_step(Error::NumericFailure {
                    tensor: name.to_string(),
                }));
            }
            let mut entry = json!({
                "kind": "step",
                "stage": stage,
                "epoch": epoch,
                "step": step,
                "lr": lr,
                "loss": loss.total,
            });
            for (k, v) in [("l_sig", loss.l_sig), ("l_fnm", loss.l_fnm), ("l_infonce", loss.l_infonce)] {
                if let Some(v) = v {
                    entry[k] = json!(v);
                }
            }
            log.push(entry);
        }
    }
    Ok(Checkpoint {
        stage,
        model,
        train: cfg.clone(),
        optimizer: opt,
    })
}
