//! Strided 1-D convolution stack with global average pooling and an affine
//! projection head ("resnet-mini").

use serde::{Deserialize, Serialize};

use super::affine_grad;
use crate::error::{Error, Result};
use crate::numerics::{gemm, gemm_nt_acc, gemm_tn, GradStore, ParamStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcgEncoderConfig {
    pub name: String,
    pub leads: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub proj_dim: usize,
}

impl Default for EcgEncoderConfig {
    fn default() -> Self {
        Self {
            name: "resnet-mini".into(),
            leads: 12,
            channels: vec![16, 32, 64, 128],
            kernel: 7,
            stride: 2,
            proj_dim: 64,
        }
    }
}

impl EcgEncoderConfig {
    /// Raw embedding dimension D (channels of the last block).
    pub fn embed_dim(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_len(&self, len_in: usize) -> usize {
        (len_in + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.leads == 0 {
            return Err(Error::Config("ECG encoder needs non-zero leads and channels".into()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 || self.stride == 0 || self.proj_dim == 0 {
            return Err(Error::Config("ECG encoder kernel must be odd and dims positive".into()));
        }
        Ok(())
    }

    /// `(in_channels, out_channels)` per block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut c_in = self.leads;
        self.channels
            .iter()
            .map(|&c_out| {
                let b = (c_in, c_out);
                c_in = c_out;
                b
            })
            .collect()
    }
}

pub fn conv_weight(block: usize) -> String {
    format!("ecg.conv{block}.weight")
}

pub fn conv_bias(block: usize) -> String {
    format!("ecg.conv{block}.bias")
}

pub const ECG_PROJ_W: &str = "ecg.proj.weight";
pub const ECG_PROJ_B: &str = "ecg.proj.bias";

/// Activations kept for the backward pass of one record.
#[derive(Debug, Clone)]
pub struct EcgCache {
    /// Input of every block; `inputs[0]` is the raw signal.
    inputs: Vec<Vec<f64>>,
    lengths: Vec<usize>,
    /// Post-ReLU output of the last block.
    last: Vec<f64>,
    pub e: Vec<f64>,
    pub e_p: Vec<f64>,
}

impl EcgCache {
    /// Which ReLU units were active, block by block.
    pub fn active_units(&self) -> impl Iterator<Item = bool> + '_ {
        self.inputs[1..]
            .iter()
            .chain(std::iter::once(&self.last))
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
    }
}

fn im2col(x: &[f64], c_in: usize, len_in: usize, cfg: &EcgEncoderConfig, len_out: usize) -> Vec<f64> {
    let k = cfg.kernel;
    let pad = cfg.padding() as isize;
    let s = cfg.stride as isize;
    let mut col = vec![0.0; c_in * k * len_out];
    for c in 0..c_in {
        let row_in = &x[c * len_in..(c + 1) * len_in];
        for kk in 0..k {
            let dst = &mut col[(c * k + kk) * len_out..(c * k + kk + 1) * len_out];
            for (o, d) in dst.iter_mut().enumerate() {
                let i = o as isize * s + kk as isize - pad;
                if i >= 0 && (i as usize) < len_in {
                    *d = row_in[i as usize];
                }
            }
        }
    }
    col
}

fn col2im_acc(dcol: &[f64], c_in: usize, len_in: usize, cfg: &EcgEncoderConfig, len_out: usize) -> Vec<f64> {
    let k = cfg.kernel;
    let pad = cfg.padding() as isize;
    let s = cfg.stride as isize;
    let mut dx = vec![0.0; c_in * len_in];
    for c in 0..c_in {
        for kk in 0..k {
            let src = &dcol[(c * k + kk) * len_out..(c * k + kk + 1) * len_out];
            for (o, &g) in src.iter().enumerate() {
                let i = o as isize * s + kk as isize - pad;
                if i >= 0 && (i as usize) < len_in {
                    dx[c * len_in + i as usize] += g;
                }
            }
        }
    }
    dx
}

fn check_signal(cfg: &EcgEncoderConfig, signal: &[f64]) -> Result<usize> {
    if signal.is_empty() || signal.len() % cfg.leads != 0 {
        return Err(Error::Shape(format!(
            "signal of {} values is not {} leads × samples",
            signal.len(),
            cfg.leads
        )));
    }
    Ok(signal.len() / cfg.leads)
}

/// Forward pass keeping the activations needed for [`ecg_backward`].
pub fn ecg_forward(params: &ParamStore, cfg: &EcgEncoderConfig, signal: &[f64]) -> Result<EcgCache> {
    let mut len = check_signal(cfg, signal)?;
    let mut x = signal.to_vec();
    let mut inputs = Vec::with_capacity(cfg.channels.len());
    let mut lengths = Vec::with_capacity(cfg.channels.len());
    for (b, (c_in, c_out)) in cfg.blocks().into_iter().enumerate() {
        let len_out = cfg.out_len(len);
        let col = im2col(&x, c_in, len, cfg, len_out);
        let w = params.get(&conv_weight(b)).data();
        let bias = params.get(&conv_bias(b)).data();
        let mut y = vec![0.0; c_out * len_out];
        for (o, &bv) in bias.iter().enumerate() {
            y[o * len_out..(o + 1) * len_out].fill(bv);
        }
        gemm(c_out, c_in * cfg.kernel, len_out, w, &col, 1.0, &mut y);
        for v in y.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        inputs.push(std::mem::replace(&mut x, y));
        lengths.push(len);
        len = len_out;
    }
    let d = cfg.embed_dim();
    let e: Vec<f64> = (0..d)
        .map(|c| x[c * len..(c + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let e_p = crate::numerics::affine(
        params.get(ECG_PROJ_W).data(),
        params.get(ECG_PROJ_B).data(),
        &e,
    );
    Ok(EcgCache {
        inputs,
        lengths,
        last: x,
        e,
        e_p,
    })
}

/// Accumulate parameter gradients given `∂L/∂e_p` (and optionally `∂L/∂e`).
pub fn ecg_backward(
    params: &ParamStore,
    cfg: &EcgEncoderConfig,
    cache: &EcgCache,
    d_e_p: &[f64],
    grads: &mut GradStore,
) {
    let d = cfg.embed_dim();
    let d_e = affine_grad(params, &cache.e, d_e_p, grads, ECG_PROJ_W, ECG_PROJ_B);

    let blocks = cfg.blocks();
    let n_blocks = blocks.len();
    let mut len_out = cfg.out_len(cache.lengths[n_blocks - 1]);
    // ∂L/∂(post-ReLU output) of the last block: uniform from average pooling
    let mut d_out: Vec<f64> = (0..d)
        .flat_map(|c| std::iter::repeat(d_e[c] / len_out as f64).take(len_out))
        .collect();
    let mut out = &cache.last;
    for b in (0..n_blocks).rev() {
        let (c_in, c_out) = blocks[b];
        let len_in = cache.lengths[b];
        for (g, &y) in d_out.iter_mut().zip(out.iter()) {
            if y <= 0.0 {
                *g = 0.0;
            }
        }
        let x = &cache.inputs[b];
        let col = im2col(x, c_in, len_in, cfg, len_out);
        let ck = c_in * cfg.kernel;
        {
            let db = grads.get_mut(&conv_bias(b)).data_mut();
            for o in 0..c_out {
                db[o] += d_out[o * len_out..(o + 1) * len_out].iter().sum::<f64>();
            }
            let dw = grads.get_mut(&conv_weight(b)).data_mut();
            gemm_nt_acc(c_out, len_out, ck, &d_out, &col, dw);
        }
        if b == 0 {
            break;
        }
        let w = params.get(&conv_weight(b)).data();
        let mut dcol = vec![0.0; ck * len_out];
        gemm_tn(ck, c_out, len_out, w, &d_out, &mut dcol);
        d_out = col2im_acc(&dcol, c_in, len_in, cfg, len_out);
        out = &cache.inputs[b];
        len_out = len_in;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_lengths() {
        let cfg = EcgEncoderConfig::default();
        let mut len = 1000;
        let mut lens = vec![];
        for _ in 0..4 {
            len = cfg.out_len(len);
            lens.push(len);
        }
        assert_eq!(lens, vec![500, 250, 125, 63]);
        assert_eq!(cfg.embed_dim(), 128);
    }

    #[test]
    fn im2col_and_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let cfg = EcgEncoderConfig {
            leads: 2,
            channels: vec![3],
            ..Default::default()
        };
        let len_in = 11;
        let len_out = cfg.out_len(len_in);
        let x: Vec<f64> = (0..2 * len_in).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..2 * cfg.kernel * len_out)
            .map(|i| (i as f64 * 0.3).cos())
            .collect();
        let lhs: f64 = im2col(&x, 2, len_in, &cfg, len_out)
            .iter()
            .zip(&y)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = x
            .iter()
            .zip(&col2im_acc(&y, 2, len_in, &cfg, len_out))
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
