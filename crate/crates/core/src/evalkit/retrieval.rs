//! Text-to-ECG retrieval and CSV exports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{cosine_sim, similarity_matrix};
use crate::corpus::{write_atomic, Corpus};
use crate::encoders::Model;
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    /// `(record id, σ(sim))`, best first.
    pub hits: Vec<(usize, f64)>,
    pub warning: Option<String>,
}

pub fn retrieve(model: &Model, query: &str, corpus: &Corpus, k: usize) -> Result<Retrieval> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if model.tokenize(query).is_empty() {
        return Err(Error::EmptyInput(format!("query {query:?} has no tokens")));
    }
    let (_, t_p) = model.embed_text(query)?;
    let mut scored = Vec::with_capacity(corpus.len());
    for r in &corpus.records {
        let (_, e_p) = model.embed_ecg(&r.ecg.signal)?;
        scored.push((r.id, sigmoid(cosine_sim(&e_p, &t_p)?)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let warning = (k > scored.len()).then(|| format!("k = {k} exceeds the corpus size {}; clamped", scored.len()));
    scored.truncate(k);
    Ok(Retrieval { hits: scored, warning })
}

/// `id,split,dim_0..dim_{D-1}` with the pre-projection embedding e.
pub fn export_embeddings(model: &Model, corpus: &Corpus, path: &Path) -> Result<()> {
    let d = model.config.ecg.embed_dim();
    let mut out = String::from("id,split");
    for j in 0..d {
        write!(out, ",dim_{j}").expect("string write");
    }
    out.push('\n');
    for r in &corpus.records {
        let (e, _) = model.embed_ecg(&r.ecg.signal)?;
        write!(out, "{},{}", r.id, r.split.as_str()).expect("string write");
        for v in e {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// The report similarity matrix S of the given records.
pub fn similarity_of(model: &Model, corpus: &Corpus, ids: &[usize]) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(ids.len());
    for &id in ids {
        let r = corpus
            .by_id(id)
            .ok_or_else(|| Error::Config(format!("no record with id {id}")))?;
        rows.push(model.embed_text(&r.report.text)?.1);
    }
    Ok(similarity_matrix(&Matrix::from_rows(&rows)?)?.matrix().clone())
}

/// S as CSV with the record ids as header row and first column.
pub fn export_similarity_heatmap(model: &Model, corpus: &Corpus, ids: &[usize], path: &Path) -> Result<()> {
    let s = similarity_of(model, corpus, ids)?;
    let mut out = String::from("id");
    for id in ids {
        write!(out, ",{id}").expect("string write");
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        write!(out, "{id}").expect("string write");
        for j in 0..ids.len() {
            write!(out, ",{}", s.get(i, j)).expect("string write");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
