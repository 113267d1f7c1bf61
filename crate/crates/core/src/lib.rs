//! Fine-grained contrastive ECG-report pre-training at desk scale.
//!
//! The crate covers the whole pipeline: a planted-structure synthetic corpus,
//! toy ECG/text encoders with hand-written backward passes, the sigmoid
//! pairwise loss with false-negative mitigation, feature proposal and
//! validation against a coarse model, the three-stage training orchestration,
//! and downstream evaluation (zero-shot, linear probe, retrieval, exports).

pub mod alignment;
pub mod cli;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod numerics;
pub mod pipeline;
pub mod proposer;

pub use error::{Error, Result};
