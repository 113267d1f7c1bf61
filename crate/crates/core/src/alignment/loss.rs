//! Cosine similarity, the semantic target matrix and the contrastive losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, log_sigmoid, sigmoid, Matrix};

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
///
/// A zero-norm argument yields `DegenerateVector` with `row` set to the
/// argument position (0 or 1).
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let na2 = dot(a, a);
    let nb2 = dot(b, b);
    if na2 <= 0.0 || !na2.is_finite() {
        return Err(Error::DegenerateVector { row: 0 });
    }
    if nb2 <= 0.0 || !nb2.is_finite() {
        return Err(Error::DegenerateVector { row: 1 });
    }
    Ok(cos_from_parts(dot(a, b), na2, nb2))
}

fn cos_from_parts(ab: f64, na2: f64, nb2: f64) -> f64 {
    (ab / (na2 * nb2).sqrt()).clamp(-1.0, 1.0)
}

fn squared_norms(m: &Matrix) -> Result<Vec<f64>> {
    (0..m.rows())
        .map(|i| {
            let n = dot(m.row(i), m.row(i));
            if n > 0.0 && n.is_finite() {
                Ok(n)
            } else {
                Err(Error::DegenerateVector { row: i })
            }
        })
        .collect()
}

/// Text-text cosine similarities, used as a fixed soft target.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(Matrix);

impl SimilarityMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    /// Wraps an explicit matrix after checking symmetry, unit diagonal and range.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::Shape(format!("similarity matrix is {}×{}", n, m.cols())));
        }
        for i in 0..n {
            if (m.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(Error::Consistency(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if !(-1.0..=1.0).contains(&v) || (v - m.get(j, i)).abs() > 1e-12 {
                    return Err(Error::Consistency(format!("entry ({i},{j}) out of range or asymmetric")));
                }
            }
        }
        Ok(Self(m))
    }
}

/// `S_ij = cos(row_i, row_j)`; symmetric by construction.
pub fn similarity_matrix(t_p: &Matrix) -> Result<SimilarityMatrix> {
    let norms = squared_norms(t_p)?;
    let n = t_p.rows();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = cos_from_parts(dot(t_p.row(i), t_p.row(j)), norms[i], norms[j]);
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(SimilarityMatrix(s))
}

/// `C_ij = cos(e_p_i, t_p_j)`.
pub fn cross_similarity(e_p: &Matrix, t_p: &Matrix) -> Result<Matrix> {
    check_pair(e_p, t_p)?;
    let ne = squared_norms(e_p)?;
    let nt = squared_norms(t_p)?;
    Ok(cross_from_norms(e_p, t_p, &ne, &nt))
}

fn cross_from_norms(e_p: &Matrix, t_p: &Matrix, ne: &[f64], nt: &[f64]) -> Matrix {
    let n = e_p.rows();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c.set(i, j, cos_from_parts(dot(e_p.row(i), t_p.row(j)), ne[i], nt[j]));
        }
    }
    c
}

fn check_pair(e_p: &Matrix, t_p: &Matrix) -> Result<()> {
    if e_p.rows() != t_p.rows() || e_p.cols() != t_p.cols() {
        return Err(Error::Shape(format!(
            "embedding batches {}×{} and {}×{} differ",
            e_p.rows(),
            e_p.cols(),
            t_p.rows(),
            t_p.cols()
        )));
    }
    if e_p.rows() == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    Ok(())
}

/// Pair label: +1 on the diagonal, -1 elsewhere.
pub fn batch_match(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        -1.0
    }
}

fn sig_from_cross(c: &Matrix, t: f64, b: f64) -> f64 {
    let n = c.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc -= log_sigmoid(batch_match(i, j) * (t * c.get(i, j) + b));
        }
    }
    acc / n as f64
}

fn fnm_from_cross(c: &Matrix, s: &SimilarityMatrix) -> f64 {
    let n = c.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (c.get(i, j) - s.get(i, j)).abs();
        }
    }
    acc / n as f64
}

fn infonce_from_cross(c: &Matrix, t: f64) -> f64 {
    let n = c.rows();
    let lse = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        let v: Vec<f64> = vals.collect();
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    let mut rows = 0.0;
    let mut cols = 0.0;
    for i in 0..n {
        let diag = t * c.get(i, i);
        rows += lse(&mut (0..n).map(|j| t * c.get(i, j))) - diag;
        cols += lse(&mut (0..n).map(|j| t * c.get(j, i))) - diag;
    }
    0.5 * (rows + cols) / n as f64
}

/// Sigmoid pairwise loss with effective scale `t` and bias `b`.
///
/// The printed form of this loss flips the sign of the scaled similarity
/// and pairs `e_p_j` with `t_p_j`; the standard pairwise form is used here.
pub fn loss_sig(e_p: &Matrix, t_p: &Matrix, t: f64, b: f64) -> Result<f64> {
    Ok(sig_from_cross(&cross_similarity(e_p, t_p)?, t, b))
}

/// L1 distance between cross-modal similarities and the target matrix, over B.
pub fn loss_fnm(e_p: &Matrix, t_p: &Matrix, s: &SimilarityMatrix) -> Result<f64> {
    let c = cross_similarity(e_p, t_p)?;
    if s.size() != c.rows() {
        return Err(Error::Shape(format!("target is {}×{}, batch is {}", s.size(), s.size(), c.rows())));
    }
    Ok(fnm_from_cross(&c, s))
}

/// Symmetric softmax contrastive loss with logits `t · C`.
pub fn infonce_loss(e_p: &Matrix, t_p: &Matrix, t: f64) -> Result<f64> {
    Ok(infonce_from_cross(&cross_similarity(e_p, t_p)?, t))
}

/// Learnable alignment scalars together with the loss weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentParams {
    pub logit_scale_log: f64,
    pub logit_bias: f64,
    pub lambda: f64,
}

impl AlignmentParams {
    pub fn scale(&self) -> f64 {
        self.logit_scale_log.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sig: f64,
    pub l_fnm: f64,
    pub l_total: f64,
    pub lambda: f64,
}

/// Sigmoid loss plus weighted false-negative term, with targets from `t_p`.
pub fn loss_total(e_p: &Matrix, t_p: &Matrix, params: &AlignmentParams) -> Result<LossBreakdown> {
    if params.lambda < 0.0 {
        return Err(Error::Config("loss weight must be non-negative".into()));
    }
    let s = similarity_matrix(t_p)?;
    let c = cross_similarity(e_p, t_p)?;
    let l_sig = sig_from_cross(&c, params.scale(), params.logit_bias);
    let l_fnm = fnm_from_cross(&c, &s);
    Ok(LossBreakdown {
        l_sig,
        l_fnm,
        l_total: l_sig + params.lambda * l_fnm,
        lambda: params.lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Sigmoid pairwise loss plus the weighted false-negative term.
    SigmoidFnm,
    /// Sigmoid pairwise loss alone.
    Sigmoid,
    #[serde(rename = "infonce")]
    InfoNce,
}

impl LossVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid_fnm" => Ok(Self::SigmoidFnm),
            "sigmoid" => Ok(Self::Sigmoid),
            "infonce" => Ok(Self::InfoNce),
            other => Err(Error::Config(format!(
                "unknown loss {other:?} (expected sigmoid_fnm, sigmoid or infonce)"
            ))),
        }
    }
}

/// Loss value of one batch, with the components that apply to its variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_sig: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_fnm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_infonce: Option<f64>,
}

/// Gradients of a batch loss with respect to its inputs.
#[derive(Debug, Clone)]
pub struct PairGrads {
    pub d_e_p: Matrix,
    pub d_t_p: Matrix,
    pub d_scale_log: f64,
    pub d_bias: f64,
}

/// Loss and input gradients for one batch.
///
/// `targets` overrides the similarity target; when `None` it is computed
/// from `t_p` and treated as a constant either way.
pub fn batch_loss(
    e_p: &Matrix,
    t_p: &Matrix,
    align: &AlignmentParams,
    variant: LossVariant,
    targets: Option<&SimilarityMatrix>,
    want_grad: bool,
) -> Result<(BatchLoss, Option<PairGrads>)> {
    check_pair(e_p, t_p)?;
    let n = e_p.rows();
    let ne = squared_norms(e_p)?;
    let nt = squared_norms(t_p)?;
    let c = cross_from_norms(e_p, t_p, &ne, &nt);
    let t = align.scale();
    let b = align.logit_bias;
    let inv_n = 1.0 / n as f64;

    // ∂L/∂C, plus the two scalar gradients
    let mut g = Matrix::zeros(n, n);
    let mut d_scale_log = 0.0;
    let mut d_bias = 0.0;
    let loss = match variant {
        LossVariant::SigmoidFnm | LossVariant::Sigmoid => {
            let lambda = if variant == LossVariant::Sigmoid { 0.0 } else { align.lambda };
            let owned;
            let s = match targets {
                Some(s) => {
                    if s.size() != n {
                        return Err(Error::Shape(format!("target is {}×{}, batch is {n}", s.size(), s.size())));
                    }
                    s
                }
                None => {
                    owned = similarity_matrix(t_p)?;
                    &owned
                }
            };
            let l_sig = sig_from_cross(&c, t, b);
            let l_fnm = fnm_from_cross(&c, s);
            if want_grad {
                let mut d_t = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let z = batch_match(i, j);
                        let cij = c.get(i, j);
                        // d/dx of -log σ(x) is -σ(-x)
                        let q = -sigmoid(-z * (t * cij + b)) * z * inv_n;
                        d_t += q * cij;
                        d_bias += q;
                        let diff = cij - s.get(i, j);
                        let sign = if diff > 0.0 {
                            1.0
                        } else if diff < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        g.set(i, j, q * t + lambda * sign * inv_n);
                    }
                }
                d_scale_log = d_t * t;
            }
            BatchLoss {
                total: l_sig + lambda * l_fnm,
                l_sig: Some(l_sig),
                l_fnm: Some(l_fnm),
                l_infonce: None,
            }
        }
        LossVariant::InfoNce => {
            let l = infonce_from_cross(&c, t);
            if want_grad {
                let logits = |i: usize, j: usize| t * c.get(i, j);
                let mut d_logit = Matrix::zeros(n, n);
                for i in 0..n {
                    let m = (0..n).map(|j| logits(i, j)).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..n).map(|j| (logits(i, j) - m).exp()).sum();
                    for j in 0..n {
                        let p = (logits(i, j) - m).exp() / z;
                        let delta = if i == j { 1.0 } else { 0.0 };
                        d_logit.set(i, j, d_logit.get(i, j) + 0.5 * inv_n * (p - delta));
                    }
                }
                for j in 0..n {
                    let m = (0..n).map(|i| logits(i, j)).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..n).map(|i| (logits(i, j) - m).exp()).sum();
                    for i in 0..n {
                        let p = (logits(i, j) - m).exp() / z;
                        let delta = if i == j { 1.0 } else { 0.0 };
                        d_logit.set(i, j, d_logit.get(i, j) + 0.5 * inv_n * (p - delta));
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let d = d_logit.get(i, j);
                        g.set(i, j, d * t);
                        d_scale_log += d * logits(i, j);
                    }
                }
            }
            BatchLoss {
                total: l,
                l_sig: None,
                l_fnm: None,
                l_infonce: Some(l),
            }
        }
    };
    if !want_grad {
        return Ok((loss, None));
    }

    // ∂C_ij/∂e_i = t_j / |e_i||t_j| - C_ij e_i / |e_i|², and symmetrically for t_j
    let p = e_p.cols();
    let mut d_e_p = Matrix::zeros(n, p);
    let mut d_t_p = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..n {
            let gij = g.get(i, j);
            if gij == 0.0 {
                continue;
            }
            let cij = c.get(i, j);
            let inv = 1.0 / (ne[i] * nt[j]).sqrt();
            let (ei, tj) = (e_p.row(i), t_p.row(j));
            let de = d_e_p.row_mut(i);
            for k in 0..p {
                de[k] += gij * (tj[k] * inv - cij * ei[k] / ne[i]);
            }
            let dt = d_t_p.row_mut(j);
            for k in 0..p {
                dt[k] += gij * (ei[k] * inv - cij * tj[k] / nt[j]);
            }
        }
    }
    Ok((
        loss,
        Some(PairGrads {
            d_e_p,
            d_t_p,
            d_scale_log,
            d_bias,
        }),
    ))
}
