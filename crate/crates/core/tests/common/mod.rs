#![allow(dead_code)]

use fgclep::corpus::{synth_corpus, Corpus, CorpusConfig};
use fgclep::encoders::{tokenize, Model, ModelConfig, Vocab, DEFAULT_MAX_VOCAB};
use fgclep::numerics::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_corpus(n: usize, seed: u64) -> Corpus {
    synth_corpus(&CorpusConfig {
        n_train: n,
        n_valid: 1,
        n_test: 1,
        p_mention: 0.5,
        seed,
        ..CorpusConfig::default()
    })
    .unwrap()
}

pub fn model_for(corpus: &Corpus, seed: u64) -> Model {
    let vocab = Vocab::build(corpus.records.iter().map(|r| r.report.text.as_str()), DEFAULT_MAX_VOCAB);
    Model::init(ModelConfig::default(), vocab, seed).unwrap()
}

/// Gives every layer bias a random magnitude in [0.02, 0.1] with random sign,
/// moving the model off the degenerate all-zero-bias point.
pub fn offset_biases(params: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = params.names().to_vec();
    for n in names {
        if n.ends_with(".bias") {
            for v in params.get_mut(&n).data_mut() {
                let m: f64 = rng.random_range(0.02..0.1);
                *v = if rng.random_bool(0.5) { m } else { -m };
            }
        }
    }
}

pub fn token_lists(model: &Model, corpus: &Corpus) -> Vec<Vec<usize>> {
    corpus
        .records
        .iter()
        .map(|r| tokenize(&model.vocab, &r.report.text))
        .collect()
}
