//! Forward and backward kernels over [`Tensor2`].
//!
//! Kernel weights are flat row-major `[out_channels][in_channels][width]`
//! slices; the output channel count is taken from the bias length.

use alloc::vec::Vec;

use super::Tensor2;
use crate::error::{config_err, Result};

/// Valid output range `[lo, hi)` for a tap at signed offset `off` over length `len`.
#[inline]
fn tap_range(off: isize, len: usize) -> Option<(usize, usize)> {
    let len = len as isize;
    let lo = (-off).max(0);
    let hi = (len - off).min(len);
    (lo < hi).then_some((lo as usize, hi as usize))
}

#[inline]
fn tap_offset(j: usize, kernel_size: usize, dilation: usize) -> isize {
    (j as isize - (kernel_size / 2) as isize) * dilation as isize
}

fn check_conv(
    input: &Tensor2,
    weights: &[f64],
    bias: &[f64],
    kernel_size: usize,
    dilation: usize,
) -> Result<()> {
    if kernel_size == 0 || kernel_size % 2 == 0 {
        return Err(config_err!("kernel size must be odd and positive, got {kernel_size}"));
    }
    if dilation == 0 {
        return Err(config_err!("dilation must be positive"));
    }
    if bias.is_empty() {
        return Err(config_err!("bias must have at least one output channel"));
    }
    let expected = bias.len() * input.channels() * kernel_size;
    if weights.len() != expected {
        return Err(config_err!(
            "kernel has {} weights, expected {}x{}x{} = {expected}",
            weights.len(),
            bias.len(),
            input.channels(),
            kernel_size
        ));
    }
    Ok(())
}

/// Dilated 1-D convolution over the time axis with symmetric zero padding of
/// `floor(K/2)·dilation` per side, so the output length equals the input length.
pub fn conv1d_dilated(
    input: &Tensor2,
    weights: &[f64],
    bias: &[f64],
    kernel_size: usize,
    dilation: usize,
) -> Result<Tensor2> {
    check_conv(input, weights, bias, kernel_size, dilation)?;
    let (cin, len) = (input.channels(), input.length());
    let mut out = Tensor2::zeros(bias.len(), len);
    for (co, &b) in bias.iter().enumerate() {
        let row = out.row_mut(co);
        row.fill(b);
        for ci in 0..cin {
            let x = input.row(ci);
            let w = &weights[(co * cin + ci) * kernel_size..][..kernel_size];
            for (j, &wj) in w.iter().enumerate() {
                let off = tap_offset(j, kernel_size, dilation);
                let Some((lo, hi)) = tap_range(off, len) else { continue };
                let src = &x[(lo as isize + off) as usize..(hi as isize + off) as usize];
                for (o, &xv) in row[lo..hi].iter_mut().zip(src) {
                    *o += wj * xv;
                }
            }
        }
    }
    out.ensure_finite("conv1d_dilated")
}

/// Accumulates gradients of [`conv1d_dilated`] given the upstream gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_dilated_backward(
    input: &Tensor2,
    weights: &[f64],
    kernel_size: usize,
    dilation: usize,
    grad_out: &Tensor2,
    grad_input: Option<&mut Tensor2>,
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) {
    let (cin, len) = (input.channels(), input.length());
    let cout = grad_out.channels();
    debug_assert_eq!(grad_weights.len(), weights.len());
    debug_assert_eq!(grad_bias.len(), cout);
    for co in 0..cout {
        let g = grad_out.row(co);
        grad_bias[co] += g.iter().sum::<f64>();
        for ci in 0..cin {
            let x = input.row(ci);
            let base = (co * cin + ci) * kernel_size;
            for j in 0..kernel_size {
                let off = tap_offset(j, kernel_size, dilation);
                let Some((lo, hi)) = tap_range(off, len) else { continue };
                let src = &x[(lo as isize + off) as usize..(hi as isize + off) as usize];
                grad_weights[base + j] += g[lo..hi].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    if let Some(gi) = grad_input {
        for ci in 0..cin {
            let dst = gi.row_mut(ci);
            for co in 0..cout {
                let g = grad_out.row(co);
                let base = (co * cin + ci) * kernel_size;
                for j in 0..kernel_size {
                    let wj = weights[base + j];
                    let off = tap_offset(j, kernel_size, dilation);
                    let Some((lo, hi)) = tap_range(off, len) else { continue };
                    let dst = &mut dst[(lo as isize + off) as usize..(hi as isize + off) as usize];
                    for (d, &gv) in dst.iter_mut().zip(&g[lo..hi]) {
                        *d += wj * gv;
                    }
                }
            }
        }
    }
}

/// 1×1 convolution: `out[c,t] = bias[c] + Σ_i kernel[c,i]·input[i,t]`.
pub fn pointwise_conv(input: &Tensor2, weights: &[f64], bias: &[f64]) -> Result<Tensor2> {
    conv1d_dilated(input, weights, bias, 1, 1)
}

pub fn pointwise_conv_backward(
    input: &Tensor2,
    weights: &[f64],
    grad_out: &Tensor2,
    grad_input: Option<&mut Tensor2>,
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) {
    conv1d_dilated_backward(input, weights, 1, 1, grad_out, grad_input, grad_weights, grad_bias)
}

fn map(input: &Tensor2, f: impl Fn(f64) -> f64) -> Tensor2 {
    let data: Vec<f64> = input.as_slice().iter().map(|&v| f(v)).collect();
    // Shape is inherited from a valid tensor.
    let mut out = Tensor2::zeros(input.channels(), input.length());
    out.as_mut_slice().copy_from_slice(&data);
    out
}

pub fn relu(input: &Tensor2) -> Tensor2 {
    map(input, |v| v.max(0.0))
}

pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor2) -> Tensor2 {
    map(input, sigmoid_scalar)
}

pub fn add(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if !a.same_shape(b) {
        return Err(config_err!(
            "add shape mismatch: {}x{} vs {}x{}",
            a.channels(),
            a.length(),
            b.channels(),
            b.length()
        ));
    }
    let mut out = a.clone();
    out.accumulate(b);
    out.ensure_finite("add")
}

/// Multiplies every channel by the binary time mask.
pub fn mask_mul(input: &Tensor2, mask: &[f64]) -> Result<Tensor2> {
    if mask.len() != input.length() {
        return Err(config_err!(
            "mask length {} does not match tensor length {}",
            mask.len(),
            input.length()
        ));
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(config_err!("mask entries must be 0 or 1"));
    }
    let mut out = input.clone();
    for c in 0..out.channels() {
        for (v, &m) in out.row_mut(c).iter_mut().zip(mask) {
            if m == 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}
