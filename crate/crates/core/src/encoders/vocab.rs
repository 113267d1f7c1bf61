//! Word vocabulary and tokenizer.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const UNKNOWN_ID: usize = 0;
pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const DEFAULT_MAX_VOCAB: usize = 5000;

/// Lowercased alphanumeric words of `text`, split on any other character.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from a set of texts: most frequent first, ties alphabetical,
    /// capped at `max_size` entries including the unknown token.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in words(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut list = vec![UNKNOWN_TOKEN.to_string()];
        list.extend(
            ranked
                .into_iter()
                .take(max_size.saturating_sub(1))
                .map(|(w, _)| w),
        );
        Self::from_words(list)
    }

    fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Word → id map as persisted in checkpoint manifests.
    pub fn to_map(&self) -> BTreeMap<String, usize> {
        self.index.iter().map(|(w, &i)| (w.clone(), i)).collect()
    }

    pub fn from_map(map: &BTreeMap<String, usize>) -> Result<Self, String> {
        let mut words = vec![String::new(); map.len()];
        for (w, &i) in map {
            if i >= words.len() || !words[i].is_empty() {
                return Err(format!("vocabulary ids are not a permutation (word {w:?} → {i})"));
            }
            words[i] = w.clone();
        }
        if words.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err("vocabulary id 0 must be the unknown token".into());
        }
        Ok(Self::from_words(words))
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, usize>::deserialize(d)?;
        Vocab::from_map(&map).map_err(serde::de::Error::custom)
    }
}

/// Token ids of `text`; unknown words map to [`UNKNOWN_ID`].
pub fn tokenize(vocab: &Vocab, text: &str) -> Vec<usize> {
    words(text).iter().map(|w| vocab.id(w)).collect()
}
