//! Differentiable objectives, gradient evaluation and finite-difference checks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{GradStore, ParamStore};
use crate::error::{Error, Result};

/// A scalar loss over a parameter store with an analytic gradient.
pub trait Objective {
    /// Forward-only evaluation.
    fn loss(&self, params: &ParamStore) -> Result<f64>;

    /// Loss and `∂loss/∂θ` for every parameter.
    fn loss_and_grad(&self, params: &ParamStore) -> Result<(f64, GradStore)>;

    /// Loss plus the on/off state of every piecewise-linear unit, for
    /// objectives that have kinks. Finite differences are only meaningful
    /// between two points with the same pattern.
    fn loss_and_pattern(&self, params: &ParamStore) -> Result<(f64, Option<Vec<bool>>)> {
        Ok((self.loss(params)?, None))
    }
}

/// Evaluate loss and gradient, rejecting non-finite results.
pub fn forward_backward(params: &ParamStore, objective: &dyn Objective) -> Result<(f64, GradStore)> {
    let (loss, grads) = objective.loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::NumericFailure {
            tensor: "loss".into(),
        });
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NumericFailure {
            tensor: format!("grad[{name}]"),
        });
    }
    Ok((loss, grads))
}

/// Forward-only counterpart of [`forward_backward`].
pub fn forward_only(params: &ParamStore, objective: &dyn Objective) -> Result<f64> {
    let loss = objective.loss(params)?;
    if !loss.is_finite() {
        return Err(Error::NumericFailure {
            tensor: "loss".into(),
        });
    }
    Ok(loss)
}

/// Per-coordinate outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    /// Sampled coordinates whose ±step probe changed the activation pattern.
    /// They are replaced by the next coordinate in the sampling order.
    pub kink_skips: usize,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.checks.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compare analytic gradients against central differences on `n_coords`
/// coordinates per tensor (all of them when the tensor is smaller).
///
/// A coordinate whose two probes straddle a kink of the objective is not a
/// test of the gradient, so it is skipped in favour of the next one drawn.
pub fn grad_check_detailed(
    params: &ParamStore,
    objective: &dyn Objective,
    step: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let (_, grads) = forward_backward(params, objective)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport::default();
    for ti in 0..params.len() {
        let len = params.at(ti).len();
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        let mut taken = 0;
        for idx in order {
            if taken == n_coords {
                break;
            }
            let orig = params.at(ti).data()[idx];
            probe.at_mut(ti).data_mut()[idx] = orig + step;
            let (plus, pat_plus) = objective.loss_and_pattern(&probe)?;
            probe.at_mut(ti).data_mut()[idx] = orig - step;
            let (minus, pat_minus) = objective.loss_and_pattern(&probe)?;
            probe.at_mut(ti).data_mut()[idx] = orig;
            if pat_plus != pat_minus {
                report.kink_skips += 1;
                continue;
            }
            taken += 1;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grads.at(ti).data()[idx];
            let rel_err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12);
            report.checks.push(CoordCheck {
                tensor: params.names()[ti].clone(),
                index: idx,
                analytic,
                numeric,
                rel_err,
            });
        }
    }
    Ok(report)
}

/// Maximum relative error over the sampled coordinates.
pub fn grad_check(
    params: &ParamStore,
    objective: &dyn Objective,
    step: f64,
    n_coords: usize,
    seed: u64,
) -> Result<f64> {
    Ok(grad_check_detailed(params, objective, step, n_coords, seed)?.max_rel_err())
}
