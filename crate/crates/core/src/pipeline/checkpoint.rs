//! Checkpoint files.
//!
//! Layout: `FGCLEP01`, u32 LE manifest length, JSON manifest, the tensors as
//! concatenated f64 LE, then the SHA-256 of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Stage, TrainConfig};
use crate::corpus::write_atomic;
use crate::encoders::{Model, ModelConfig, Vocab};
use crate::error::{Error, Result};
use crate::numerics::{AdamWConfig, OptimizerState, ParamStore, Tensor, TensorEntry};

pub const CHECKPOINT_VERSION: u32 = 1;
const FAMILY: &[u8; 6] = b"FGCLEP";
const DIGEST_LEN: usize = 32;
const M_PREFIX: &str = "optim.m/";
const V_PREFIX: &str = "optim.v/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub model: Model,
    pub train: TrainConfig,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut table = Vec::new();
        let stores = [
            ("", &self.model.params),
            (M_PREFIX, &self.optimizer.m),
            (V_PREFIX, &self.optimizer.v),
        ];
        for (prefix, store) in stores {
            for (name, t) in store.iter() {
                table.push(TensorEntry {
                    name: format!("{prefix}{name}"),
                    shape: t.shape().to_vec(),
                    byte_offset: payload.len() as u64,
                });
                for v in t.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            stage: self.stage,
            config: ConfigSnapshot {
                model: self.model.config.clone(),
                train: self.train.clone(),
            },
            vocabulary: self.model.vocab.to_map(),
            optimizer: OptimizerMeta {
                step: self.optimizer.step,
                config: self.optimizer.config,
            },
            tensors: table,
        };
        let json = serde_json::to_vec(&manifest)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("manifest too large".into()))?;
        let mut out = Vec::with_capacity(12 + json.len() + payload.len() + DIGEST_LEN);
        out.extend_from_slice(FAMILY);
        out.extend_from_slice(format!("{CHECKPOINT_VERSION:02}").as_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    /// Checks, in order: file family, digest, version, then structure.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..6] != FAMILY {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(Error::Corruption("checkpoint is truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Corruption("checkpoint digest does not match its contents".into()));
        }
        let tag = std::str::from_utf8(&bytes[6..8])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::Format("unreadable checkpoint version tag".into()))?;
        if tag != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: tag,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let json = body
            .get(12..12 + len)
            .ok_or_else(|| Error::Corruption("manifest length exceeds file".into()))?;
        let manifest: Manifest = serde_json::from_slice(json)?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: manifest.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let payload = &body[12 + len..];

        let mut params = ParamStore::new();
        let mut m = ParamStore::new();
        let mut v = ParamStore::new();
        let mut expected_offset = 0u64;
        for e in &manifest.tensors {
            if e.byte_offset != expected_offset {
                return Err(Error::Corruption(format!("tensor {} is not contiguous", e.name)));
            }
            let n: usize = e.shape.iter().product();
            let start = e.byte_offset as usize;
            let raw = payload
                .get(start..start + 8 * n)
                .ok_or_else(|| Error::Corruption(format!("tensor {} runs past the payload", e.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::from_vec(&e.shape, data)?;
            expected_offset += 8 * n as u64;
            if let Some(name) = e.name.strip_prefix(M_PREFIX) {
                m.insert(name, t)?;
            } else if let Some(name) = e.name.strip_prefix(V_PREFIX) {
                v.insert(name, t)?;
            } else {
                params.insert(&e.name, t)?;
            }
        }
        if expected_offset as usize != payload.len() {
            return Err(Error::Corruption("trailing bytes after the last tensor".into()));
        }
        if !params.same_layout(&m) || !params.same_layout(&v) {
            return Err(Error::Corruption("optimizer moments do not match the parameters".into()));
        }
        let vocab = Vocab::from_map(&manifest.vocabulary).map_err(Error::Corruption)?;
        let model = Model {
            config: manifest.config.model,
            vocab,
            params,
        };
        let expected = crate::encoders::init_params(&model.config, model.vocab.len(), 0)?;
        if !expected.same_layout(&model.params) {
            return Err(Error::Corruption("parameters do not match the model configuration".into()));
        }
        Ok(Self {
            stage: manifest.stage,
            model,
            train: manifest.config.train,
            optimizer: OptimizerState {
                config: manifest.optimizer.config,
                step: manifest.optimizer.step,
                m,
                v,
            },
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    stage: Stage,
    config: ConfigSnapshot,
    vocabulary: BTreeMap<String, usize>,
    optimizer: OptimizerMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigSnapshot {
    model: ModelConfig,
    train: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerMeta {
    step: u64,
    config: AdamWConfig,
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ck.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
