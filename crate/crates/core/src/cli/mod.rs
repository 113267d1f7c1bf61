//! Command-line driver: corpus synthesis, the three training stages,
//! evaluation and exports. Diagnostics go to stderr; results go to files
//! (or stdout when no output path is given).

mod config;

pub use config::{apply_override, RunConfig};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::corpus::{import_pairs, load_corpus, save_corpus, synth_corpus, write_atomic, Corpus, Split};
use crate::error::{Error, Result};
use crate::evalkit::{
    export_embeddings, export_similarity_heatmap, linear_probe, retrieve, zero_shot_auc, EvalReport, LabelSet,
};
use crate::pipeline::{
    augment_corpus, run_fgclep, save_checkpoint, train_stage, Checkpoint, MetricsLog, Stage, StageInit,
};
use crate::proposer::ScoreScale;

#[derive(Debug, Parser)]
#[command(name = "fgclep", version, about = "Fine-grained contrastive ECG-report pre-training")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.base_lr=1e-3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a corpus with planted waveform features.
    Synth {
        /// Output prefix; writes <prefix>.jsonl and <prefix>.sig.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1 only: contrastive training on the original reports.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for clep.ckpt and metrics.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 2 only: propose, validate and append features to train reports.
    Augment {
        /// Stage-1 checkpoint used for validation.
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output prefix for the augmented corpus; statistics go to <prefix>.augment.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// All three stages.
    Run {
        /// Corpus prefix; synthesized from the `corpus` section when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Rank corpus ECGs against a free-text query.
    Retrieve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// JSON output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV exports for external plotting.
    #[command(subcommand)]
    Export(ExportCommand),
    /// Pair an external signal blob with one report per line.
    Import {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        sample_rate: f64,
        /// Output corpus prefix.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Labels {
    Diagnoses,
    Features,
}

impl From<Labels> for LabelSet {
    fn from(l: Labels) -> Self {
        match l {
            Labels::Diagnoses => LabelSet::Diagnoses,
            Labels::Features => LabelSet::Features,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalSplit {
    Valid,
    Test,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Sigmoid similarity between ECGs and class-name prompts.
    ZeroShot {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "diagnoses")]
        labels: Labels,
        /// Add the per-lead prompts and keep the maximum score.
        #[arg(long)]
        ensemble: bool,
        #[arg(long, value_enum, default_value = "test")]
        split: EvalSplit,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Affine classifier on frozen ECG embeddings, one result per train fraction.
    LinearProbe {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "diagnoses")]
        labels: Labels,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ExportCommand {
    /// Pre-projection ECG embeddings of every record.
    Embeddings {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report similarity matrix of the given record ids.
    Heatmap {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated record ids.
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (program name first) and runs it. Exit code 0 on success,
/// 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    // a configuration that does not resolve is a usage problem
    let cfg = match RunConfig::resolve(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match dispatch(cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn read_checkpoint(path: &Path) -> Result<(Checkpoint, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((Checkpoint::from_bytes(&bytes)?, bytes))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model_and_corpus(args: &ModelArgs) -> Result<(Checkpoint, Vec<u8>, Corpus)> {
    let (ck, bytes) = read_checkpoint(&args.ckpt)?;
    let corpus = load_corpus(&args.corpus)?;
    Ok((ck, bytes, corpus))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth { out } => {
            let corpus = synth_corpus(&cfg.corpus)?;
            save_corpus(&corpus, &out)?;
            eprintln!("wrote {} records to {}", corpus.len(), out.display());
        }
        Command::Train { corpus, out } => {
            let corpus = load_corpus(&corpus)?;
            create_dir(&out)?;
            let mut log = MetricsLog::default();
            let ck = train_stage(
                &corpus,
                StageInit::Fresh(&cfg.model),
                &cfg.train,
                cfg.train.epochs_stage1,
                Stage::Clep,
                &mut log,
            )?;
            save_checkpoint(&ck, &out.join("clep.ckpt"))?;
            log.save(&out.join("metrics.jsonl"))?;
            eprintln!("stage 1 done: {} steps", ck.optimizer.step);
        }
        Command::Augment { ckpt, corpus, out } => {
            let (ck, _) = read_checkpoint(&ckpt)?;
            let corpus = load_corpus(&corpus)?;
            let mut log = MetricsLog::default();
            let outcome = augment_corpus(&corpus, &ck, &cfg.proposer, cfg.train.seed, &mut log)?;
            save_corpus(&outcome.corpus, &out)?;
            let stats_path = PathBuf::from(format!("{}.augment.json", out.display()));
            emit(
                &json!({ "stats": outcome.stats, "proposals": outcome.proposals, "failures": outcome.failures }),
                Some(&stats_path),
            )?;
            for (id, why) in &outcome.failures {
                eprintln!("warning: record {id} kept its original report: {why}");
            }
            eprintln!(
                "accepted {} of {} proposals; {} reports changed",
                outcome.stats.accepted, outcome.stats.proposed, outcome.stats.augmented_records
            );
        }
        Command::Run { corpus, out } => {
            let corpus = match corpus {
                Some(p) => load_corpus(&p)?,
                None => synth_corpus(&cfg.corpus)?,
            };
            create_dir(&out)?;
            let outcome = run_fgclep(&corpus, &cfg.model, &cfg.train, &cfg.proposer)?;
            save_checkpoint(&outcome.clep, &out.join("clep.ckpt"))?;
            save_checkpoint(&outcome.fgclep, &out.join("fgclep.ckpt"))?;
            save_corpus(&outcome.augmentation.corpus, &out.join("augmented"))?;
            outcome.log.save(&out.join("metrics.jsonl"))?;
            emit(&serde_json::to_value(cfg)?, Some(&out.join("config.json")))?;
            for (id, why) in &outcome.augmentation.failures {
                eprintln!("warning: record {id} kept its original report: {why}");
            }
            eprintln!("run complete: {}", out.display());
        }
        Command::Eval(EvalCommand::ZeroShot {
            model,
            labels,
            ensemble,
            split,
            out,
        }) => {
            let (ck, bytes, corpus) = load_model_and_corpus(&model)?;
            let split = match split {
                EvalSplit::Valid => Split::Valid,
                EvalSplit::Test => Split::Test,
            };
            let leads = ensemble.then_some(cfg.eval.lead_names.as_slice());
            let auc = zero_shot_auc(&ck.model, &corpus, split, labels.into(), leads, ScoreScale::Literal)?;
            for c in &auc.skipped_classes {
                eprintln!("warning: class {c:?} has a single label value in the {} split; skipped", split.as_str());
            }
            let task = if ensemble { "zero-shot-ensemble" } else { "zero-shot" };
            let config = json!({
                "labels": LabelSet::from(labels),
                "split": split,
                "ensemble": ensemble,
                "lead_names": leads,
                "checkpoint": model.ckpt,
                "corpus": model.corpus,
            });
            emit(&serde_json::to_value(EvalReport::new(task, &bytes, auc, config))?, out.as_deref())?;
        }
        Command::Eval(EvalCommand::LinearProbe { model, labels, out }) => {
            let (ck, bytes, corpus) = load_model_and_corpus(&model)?;
            let results = linear_probe(
                &ck.model,
                &corpus,
                labels.into(),
                &cfg.eval.fractions,
                cfg.train.seed,
                cfg.eval.probe_input,
            )?;
            let mut reports = Vec::new();
            for r in results {
                for w in &r.warnings {
                    eprintln!("warning: fraction {}: {w}", r.fraction);
                }
                let config = json!({
                    "labels": LabelSet::from(labels),
                    "fraction": r.fraction,
                    "n_train": r.n_train,
                    "probe_input": cfg.eval.probe_input,
                    "seed": cfg.train.seed,
                    "warnings": r.warnings,
                    "checkpoint": model.ckpt,
                    "corpus": model.corpus,
                });
                reports.push(EvalReport::new("linear-probe", &bytes, r.auc, config));
            }
            emit(&serde_json::to_value(reports)?, out.as_deref())?;
        }
        Command::Retrieve { model, query, k, out } => {
            let (ck, _, corpus) = load_model_and_corpus(&model)?;
            let r = retrieve(&ck.model, &query, &corpus, k)?;
            if let Some(w) = &r.warning {
                eprintln!("warning: {w}");
            }
            let hits: Vec<_> = r.hits.iter().map(|(id, score)| json!({ "id": id, "score": score })).collect();
            emit(&json!({ "query": query, "k": k, "hits": hits }), out.as_deref())?;
        }
        Command::Export(ExportCommand::Embeddings { model, out }) => {
            let (ck, _, corpus) = load_model_and_corpus(&model)?;
            export_embeddings(&ck.model, &corpus, &out)?;
        }
        Command::Export(ExportCommand::Heatmap { model, ids, out }) => {
            let (ck, _, corpus) = load_model_and_corpus(&model)?;
            export_similarity_heatmap(&ck.model, &corpus, &ids, &out)?;
        }
        Command::Import {
            signals,
            reports,
            sample_rate,
            out,
        } => {
            let outcome = import_pairs(&signals, &reports, sample_rate)?;
            for n in &outcome.notices {
                eprintln!("notice: {n}");
            }
            save_corpus(&outcome.corpus, &out)?;
            eprintln!("imported {} records to {}", outcome.corpus.len(), out.display());
        }
    }
    Ok(())
}
