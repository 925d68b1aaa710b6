//! Style-modulated valid convolution.
//!
//! `w'[o,i,·] = w[o,i,·]·s[i]`, optionally demodulated per output channel by
//! `σ[o] = sqrt(Σ_{i,k} w'[o,i,k]² + 1e-8)`, then applied without padding.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{conv2d_valid, conv2d_valid_backward, ConvShape, Tensor};
use crate::{Error, Result};

pub const DEMOD_EPS: f64 = 1e-8;

/// Values saved by the forward pass for [`modulated_valid_conv_backward`].
#[derive(Debug, Clone)]
pub struct ModConvCache {
    pub input: Tensor,
    pub style: Vec<f64>,
    pub demodulate: bool,
    shape: ConvShape,
    modulated: Vec<f64>,
    /// `1/σ[o]` per output channel (all 1 without demodulation).
    inv_sigma: Vec<f64>,
    effective: Vec<f64>,
}

/// Weight layout `(out, in, k, k)`; `style.len()` must equal `in`.
pub fn modulated_valid_conv(
    input: &Tensor,
    weight: &[f64],
    out_ch: usize,
    kernel: usize,
    style: &[f64],
    demodulate: bool,
) -> Result<(Tensor, ModConvCache)> {
    let in_ch = style.len();
    let shape = ConvShape { out_ch, in_ch, kernel, stride: 1 };
    if weight.len() != shape.weight_len() {
        return Err(Error::ShapeMismatch {
            what: "modulated conv weight",
            expected: alloc::format!("{}", shape.weight_len()),
            actual: alloc::format!("{}", weight.len()),
        });
    }
    if input.height < kernel || input.width < kernel {
        return Err(Error::ShapeUnderflow {
            level: 0,
            size: input.height.min(input.width) as i64,
            detail: alloc::format!("modulated conv needs spatial size >= {kernel}"),
        });
    }
    let kk = kernel * kernel;
    let mut modulated = vec![0.0; weight.len()];
    for o in 0..out_ch {
        for i in 0..in_ch {
            let base = (o * in_ch + i) * kk;
            for k in 0..kk {
                modulated[base + k] = weight[base + k] * style[i];
            }
        }
    }
    let inv_sigma: Vec<f64> = (0..out_ch)
        .map(|o| {
            if demodulate {
                let row = &modulated[o * in_ch * kk..(o + 1) * in_ch * kk];
                1.0 / libm::sqrt(row.iter().map(|v| v * v).sum::<f64>() + DEMOD_EPS)
            } else {
                1.0
            }
        })
        .collect();
    let effective: Vec<f64> = modulated
        .iter()
        .enumerate()
        .map(|(idx, &v)| v * inv_sigma[idx / (in_ch * kk)])
        .collect();
    let out = conv2d_valid(input, &effective, shape)?;
    let cache = ModConvCache {
        input: input.clone(),
        style: style.to_vec(),
        demodulate,
        shape,
        modulated,
        inv_sigma,
        effective,
    };
    Ok((out, cache))
}

/// Returns `(grad_input, grad_weight, grad_style)`.
pub fn modulated_valid_conv_backward(
    cache: &ModConvCache,
    weight: &[f64],
    grad_out: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let ConvShape { out_ch, in_ch, kernel, .. } = cache.shape;
    let kk = kernel * kernel;
    let (grad_in, grad_eff) = conv2d_valid_backward(&cache.input, &cache.effective, cache.shape, grad_out);

    // Through demodulation: eff = mod · r,  r = (Σ mod² + ε)^(-1/2)
    // d mod = r·g − mod·r³·Σ(g·mod)
    let mut grad_mod = vec![0.0; grad_eff.len()];
    for o in 0..out_ch {
        let span = o * in_ch * kk..(o + 1) * in_ch * kk;
        let r = cache.inv_sigma[o];
        if cache.demodulate {
            let dot: f64 = grad_eff[span.clone()].iter().zip(&cache.modulated[span.clone()]).map(|(g, m)| g * m).sum();
            let r3 = r * r * r;
            for idx in span {
                grad_mod[idx] = r * grad_eff[idx] - cache.modulated[idx] * r3 * dot;
            }
        } else {
            for idx in span {
                grad_mod[idx] = grad_eff[idx];
            }
        }
    }

    let mut grad_w = vec![0.0; weight.len()];
    let mut grad_style = vec![0.0; in_ch];
    for o in 0..out_ch {
        for i in 0..in_ch {
            let base = (o * in_ch + i) * kk;
            for k in 0..kk {
                grad_w[base + k] = grad_mod[base + k] * cache.style[i];
                grad_style[i] += grad_mod[base + k] * weight[base + k];
            }
        }
    }
    (grad_in, grad_w, grad_style)
}
