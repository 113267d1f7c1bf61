//! Full-model contrastive objective over one batch of ECG-report pairs.

use crate::encoders::{
    ecg_backward, ecg_forward, text_backward, text_forward, EcgCache, ModelConfig, TextCache,
};
use crate::error::Result;
use crate::numerics::{GradStore, Matrix, Objective, ParamStore};

use super::loss::{batch_loss, similarity_matrix, AlignmentParams, BatchLoss, LossVariant, SimilarityMatrix};
use super::{LOGIT_BIAS, LOGIT_SCALE_LOG};

#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub signal: &'a [f64],
    pub tokens: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct ContrastiveObjective<'a> {
    cfg: &'a ModelConfig,
    items: Vec<BatchItem<'a>>,
    variant: LossVariant,
    lambda: f64,
    frozen: Option<SimilarityMatrix>,
}

impl<'a> ContrastiveObjective<'a> {
    pub fn new(cfg: &'a ModelConfig, items: Vec<BatchItem<'a>>, variant: LossVariant, lambda: f64) -> Self {
        Self {
            cfg,
            items,
            variant,
            lambda,
            frozen: None,
        }
    }

    /// Pins the similarity target to its value at `params`, so that finite
    /// differences see the same constant target the analytic gradient does.
    pub fn freeze_targets(mut self, params: &ParamStore) -> Result<Self> {
        let mut rows = Vec::with_capacity(self.items.len());
        for it in &self.items {
            rows.push(text_forward(params, &self.cfg.text, it.tokens)?.t_p);
        }
        self.frozen = Some(similarity_matrix(&Matrix::from_rows(&rows)?)?);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn encode(&self, params: &ParamStore) -> Result<(Vec<EcgCache>, Vec<TextCache>)> {
        let mut ecg = Vec::with_capacity(self.items.len());
        let mut txt = Vec::with_capacity(self.items.len());
        for it in &self.items {
            ecg.push(ecg_forward(params, &self.cfg.ecg, it.signal)?);
            txt.push(text_forward(params, &self.cfg.text, it.tokens)?);
        }
        Ok((ecg, txt))
    }

    pub fn evaluate(&self, params: &ParamStore, want_grad: bool) -> Result<(BatchLoss, Option<GradStore>)> {
        let (ecg, txt) = self.encode(params)?;
        self.evaluate_encoded(params, &ecg, &txt, want_grad)
    }

    fn evaluate_encoded(
        &self,
        params: &ParamStore,
        ecg: &[EcgCache],
        txt: &[TextCache],
        want_grad: bool,
    ) -> Result<(BatchLoss, Option<GradStore>)> {
        let e_p = Matrix::from_rows(&ecg.iter().map(|c| c.e_p.clone()).collect::<Vec<_>>())?;
        let t_p = Matrix::from_rows(&txt.iter().map(|c| c.t_p.clone()).collect::<Vec<_>>())?;
        let align = AlignmentParams {
            logit_scale_log: params.get(LOGIT_SCALE_LOG).data()[0],
            logit_bias: params.get(LOGIT_BIAS).data()[0],
            lambda: self.lambda,
        };
        let (loss, pair) = batch_loss(&e_p, &t_p, &align, self.variant, self.frozen.as_ref(), want_grad)?;
        let Some(pair) = pair else {
            return Ok((loss, None));
        };
        let mut grads = params.zeros_like();
        grads.get_mut(LOGIT_SCALE_LOG).data_mut()[0] = pair.d_scale_log;
        grads.get_mut(LOGIT_BIAS).data_mut()[0] = pair.d_bias;
        for (i, (ce, ct)) in ecg.iter().zip(txt).enumerate() {
            ecg_backward(params, &self.cfg.ecg, ce, pair.d_e_p.row(i), &mut grads);
            text_backward(params, &self.cfg.text, ct, pair.d_t_p.row(i), &mut grads);
        }
        Ok((loss, Some(grads)))
    }
}

impl Objective for ContrastiveObjective<'_> {
    fn loss(&self, params: &ParamStore) -> Result<f64> {
        Ok(self.evaluate(params, false)?.0.total)
    }

    fn loss_and_grad(&self, params: &ParamStore) -> Result<(f64, GradStore)> {
        let (loss, grads) = self.evaluate(params, true)?;
        Ok((loss.total, grads.expect("gradient requested")))
    }

    fn loss_and_pattern(&self, params: &ParamStore) -> Result<(f64, Option<Vec<bool>>)> {
        let (ecg, txt) = self.encode(params)?;
        let (loss, _) = self.evaluate_encoded(params, &ecg, &txt, false)?;
        let pattern = ecg
            .iter()
            .flat_map(EcgCache::active_units)
            .chain(txt.iter().flat_map(TextCache::active_units))
            .collect();
        Ok((loss.total, Some(pattern)))
    }
}
