//! Toy encoders mapping ECG signals and report text into a shared space.

mod ecg;
mod text;
mod vocab;

pub use ecg::{
    conv_bias, conv_weight, ecg_backward, ecg_forward, EcgCache, EcgEncoderConfig, ECG_PROJ_B,
    ECG_PROJ_W,
};
pub use text::{
    text_backward, text_forward, TextCache, TextEncoderConfig, TXT_EMBED, TXT_FC1_B, TXT_FC1_W,
    TXT_FC2_B, TXT_FC2_W, TXT_PROJ_B, TXT_PROJ_W,
};
pub use vocab::{tokenize, words, Vocab, DEFAULT_MAX_VOCAB, UNKNOWN_ID, UNKNOWN_TOKEN};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentInit, LOGIT_BIAS, LOGIT_SCALE_LOG};
use crate::error::{Error, Result};
use crate::numerics::{
    affine_backward, glorot_uniform, normal_init, GradStore, Matrix, ParamStore, Tensor,
};

const INIT_STREAM: u64 = 2;
const EMBED_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub ecg: EcgEncoderConfig,
    pub text: TextEncoderConfig,
    pub align: AlignmentInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ecg: EcgEncoderConfig::default(),
            text: TextEncoderConfig::default(),
            align: AlignmentInit::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.ecg.validate()?;
        self.text.validate()?;
        self.align.validate()?;
        if self.ecg.proj_dim != self.text.proj_dim {
            return Err(Error::Config(format!(
                "projection dims differ: ecg {} vs text {}",
                self.ecg.proj_dim, self.text.proj_dim
            )));
        }
        Ok(())
    }

    pub fn proj_dim(&self) -> usize {
        self.ecg.proj_dim
    }
}

/// Weight and bias gradients of an affine layer; returns `∂L/∂x`.
pub(crate) fn affine_grad(
    params: &ParamStore,
    x: &[f64],
    dy: &[f64],
    grads: &mut GradStore,
    w: &str,
    b: &str,
) -> Vec<f64> {
    let (dw, db) = grads.pair_mut(w, b);
    affine_backward(params.get(w).data(), x, dy, dw.data_mut(), db.data_mut())
}

/// Fresh parameters in the fixed registration order.
pub fn init_params(cfg: &ModelConfig, vocab_size: usize, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let mut p = ParamStore::new();
    let k = cfg.ecg.kernel;
    for (b, (c_in, c_out)) in cfg.ecg.blocks().into_iter().enumerate() {
        p.insert(
            &conv_weight(b),
            glorot_uniform(&[c_out, c_in, k], c_in * k, c_out * k, &mut rng),
        )?;
        p.insert(&conv_bias(b), Tensor::zeros(&[c_out]))?;
    }
    let d = cfg.ecg.embed_dim();
    let pd = cfg.proj_dim();
    p.insert(ECG_PROJ_W, glorot_uniform(&[pd, d], d, pd, &mut rng))?;
    p.insert(ECG_PROJ_B, Tensor::zeros(&[pd]))?;

    let t = &cfg.text;
    p.insert(TXT_EMBED, normal_init(&[vocab_size, t.token_dim], EMBED_STD, &mut rng))?;
    let layers = [
        (TXT_FC1_W, TXT_FC1_B, t.token_dim, t.hidden_dim),
        (TXT_FC2_W, TXT_FC2_B, t.hidden_dim, t.embed_dim),
        (TXT_PROJ_W, TXT_PROJ_B, t.embed_dim, t.proj_dim),
    ];
    for (w, b, n_in, n_out) in layers {
        p.insert(w, glorot_uniform(&[n_out, n_in], n_in, n_out, &mut rng))?;
        p.insert(b, Tensor::zeros(&[n_out]))?;
    }

    p.insert(LOGIT_SCALE_LOG, Tensor::from_vec(&[1], vec![cfg.align.scale.ln()])?)?;
    p.insert(LOGIT_BIAS, Tensor::from_vec(&[1], vec![cfg.align.bias])?)?;
    Ok(p)
}

/// `(e, e_p)` for one lead-major signal.
pub fn embed_ecg(params: &ParamStore, cfg: &EcgEncoderConfig, signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = ecg_forward(params, cfg, signal)?;
    Ok((c.e, c.e_p))
}

/// `(t, t_p)` for one token list.
pub fn embed_text(params: &ParamStore, cfg: &TextEncoderConfig, ids: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = text_forward(params, cfg, ids)?;
    Ok((c.t, c.t_p))
}

/// Raw and projected embeddings of a batch.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub e: Matrix,
    pub e_p: Matrix,
    pub t: Matrix,
    pub t_p: Matrix,
}

/// Parameters bundled with their configuration and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

impl Model {
    pub fn init(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        let params = init_params(&config, vocab.len(), seed)?;
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn embed_ecg(&self, signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        embed_ecg(&self.params, &self.config.ecg, signal)
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        tokenize(&self.vocab, text)
    }

    pub fn embed_text(&self, text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        embed_text(&self.params, &self.config.text, &self.tokenize(text))
    }

    /// Embeds paired signals and texts.
    pub fn embed_batch(&self, signals: &[&[f64]], texts: &[&str]) -> Result<EmbeddingBatch> {
        if signals.len() != texts.len() {
            return Err(Error::Shape(format!(
                "{} signals vs {} texts",
                signals.len(),
                texts.len()
            )));
        }
        let mut e = Vec::new();
        let mut e_p = Vec::new();
        for s in signals {
            let (a, b) = self.embed_ecg(s)?;
            e.push(a);
            e_p.push(b);
        }
        let mut t = Vec::new();
        let mut t_p = Vec::new();
        for s in texts {
            let (a, b) = self.embed_text(s)?;
            t.push(a);
            t_p.push(b);
        }
        let batch = EmbeddingBatch {
            e: Matrix::from_rows(&e)?,
            e_p: Matrix::from_rows(&e_p)?,
            t: Matrix::from_rows(&t)?,
            t_p: Matrix::from_rows(&t_p)?,
        };
        if !(batch.e.is_finite() && batch.e_p.is_finite() && batch.t.is_finite() && batch.t_p.is_finite()) {
            return Err(Error::NumericFailure {
                tensor: "embedding batch".into(),
            });
        }
        Ok(batch)
    }

    /// Effective logit scale `t = exp(logit_scale_log)`.
    pub fn logit_scale(&self) -> f64 {
        self.params.get(LOGIT_SCALE_LOG).data()[0].exp()
    }

    pub fn logit_bias(&self) -> f64 {
        self.params.get(LOGIT_BIAS).data()[0]
    }
}
