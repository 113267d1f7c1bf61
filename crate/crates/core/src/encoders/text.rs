//! Bag-of-words text encoder: mean token embedding followed by a two-layer
//! rectified MLP and an affine projection head ("bow-mlp").

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use super::affine_grad;
use crate::numerics::{affine, relu_inplace, GradStore, ParamStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextEncoderConfig {
    pub name: String,
    pub max_vocab: usize,
    pub token_dim: usize,
    pub hidden_dim: usize,
    /// Raw text embedding dimension M.
    pub embed_dim: usize,
    pub proj_dim: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self {
            name: "bow-mlp".into(),
            max_vocab: super::vocab::DEFAULT_MAX_VOCAB,
            token_dim: 64,
            hidden_dim: 128,
            embed_dim: 128,
            proj_dim: 64,
        }
    }
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_vocab < 2
            || self.token_dim == 0
            || self.hidden_dim == 0
            || self.embed_dim == 0
            || self.proj_dim == 0
        {
            return Err(Error::Config("text encoder dims must be positive".into()));
        }
        Ok(())
    }
}

pub const TXT_EMBED: &str = "txt.embed";
pub const TXT_FC1_W: &str = "txt.fc1.weight";
pub const TXT_FC1_B: &str = "txt.fc1.bias";
pub const TXT_FC2_W: &str = "txt.fc2.weight";
pub const TXT_FC2_B: &str = "txt.fc2.bias";
pub const TXT_PROJ_W: &str = "txt.proj.weight";
pub const TXT_PROJ_B: &str = "txt.proj.bias";

#[derive(Debug, Clone)]
pub struct TextCache {
    /// Sorted distinct ids with their pooling weights (count / n).
    bag: Vec<(usize, f64)>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    pub t: Vec<f64>,
    pub t_p: Vec<f64>,
}

impl TextCache {
    /// Which ReLU units were active in both hidden layers.
    pub fn active_units(&self) -> impl Iterator<Item = bool> + '_ {
        self.hidden.iter().chain(&self.t).map(|&v| v > 0.0)
    }
}

fn bag_of_ids(ids: &[usize]) -> Vec<(usize, f64)> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let n = ids.len() as f64;
    let mut bag: Vec<(usize, f64)> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for id in sorted {
        match bag.last() {
            Some(&(last, _)) if last == id => *counts.last_mut().unwrap() += 1,
            _ => {
                bag.push((id, 0.0));
                counts.push(1);
            }
        }
    }
    for ((_, w), c) in bag.iter_mut().zip(counts) {
        *w = c as f64 / n;
    }
    bag
}

pub fn text_forward(params: &ParamStore, cfg: &TextEncoderConfig, ids: &[usize]) -> Result<TextCache> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("token list is empty".into()));
    }
    let table = params.get(TXT_EMBED);
    let vocab_size = table.shape()[0];
    let dim = cfg.token_dim;
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
        return Err(Error::Shape(format!(
            "token id {bad} outside vocabulary of {vocab_size}"
        )));
    }
    // duplicates and order collapse into the same weighted sum
    let bag = bag_of_ids(ids);
    let mut pooled = vec![0.0; dim];
    for &(id, w) in &bag {
        let row = &table.data()[id * dim..(id + 1) * dim];
        for (p, &r) in pooled.iter_mut().zip(row) {
            *p += w * r;
        }
    }
    let mut hidden = affine(params.get(TXT_FC1_W).data(), params.get(TXT_FC1_B).data(), &pooled);
    relu_inplace(&mut hidden);
    let mut t = affine(params.get(TXT_FC2_W).data(), params.get(TXT_FC2_B).data(), &hidden);
    relu_inplace(&mut t);
    let t_p = affine(params.get(TXT_PROJ_W).data(), params.get(TXT_PROJ_B).data(), &t);
    Ok(TextCache {
        bag,
        pooled,
        hidden,
        t,
        t_p,
    })
}

pub fn text_backward(
    params: &ParamStore,
    cfg: &TextEncoderConfig,
    cache: &TextCache,
    d_t_p: &[f64],
    grads: &mut GradStore,
) {
    let mut d_t = affine_grad(params, &cache.t, d_t_p, grads, TXT_PROJ_W, TXT_PROJ_B);
    for (g, &y) in d_t.iter_mut().zip(&cache.t) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
    let mut d_h = affine_grad(params, &cache.hidden, &d_t, grads, TXT_FC2_W, TXT_FC2_B);
    for (g, &y) in d_h.iter_mut().zip(&cache.hidden) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
    let d_pooled = affine_grad(params, &cache.pooled, &d_h, grads, TXT_FC1_W, TXT_FC1_B);
    let dim = cfg.token_dim;
    let table = grads.get_mut(TXT_EMBED).data_mut();
    for &(id, w) in &cache.bag {
        for (g, &d) in table[id * dim..(id + 1) * dim].iter_mut().zip(&d_pooled) {
            *g += w * d;
        }
    }
}
