//! Contrastive alignment of the two embedding spaces.

mod loss;
mod objective;

pub use loss::{
    batch_loss, batch_match, cosine_sim, cross_similarity, infonce_loss, loss_fnm, loss_sig,
    loss_total, similarity_matrix, AlignmentParams, BatchLoss, LossBreakdown, LossVariant,
    PairGrads, SimilarityMatrix,
};
pub use objective::{BatchItem, ContrastiveObjective};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOGIT_SCALE_LOG: &str = "align.logit_scale_log";
pub const LOGIT_BIAS: &str = "align.logit_bias";

/// Initial values of the learnable scale (effective, not log) and bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentInit {
    pub scale: f64,
    pub bias: f64,
}

impl Default for AlignmentInit {
    fn default() -> Self {
        Self {
            scale: 10.0,
            bias: -10.0,
        }
    }
}

impl AlignmentInit {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite() && self.bias.is_finite()) {
            return Err(Error::Config("logit scale must be positive and finite".into()));
        }
        Ok(())
    }
}
