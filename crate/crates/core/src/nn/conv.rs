//! 2-D convolutions with channel groups: one kernel covers the standard,
//! depthwise (groups = in_channels), and pointwise (1x1) cases the model needs.
//! Stride is always 1; padding is explicit and may be asymmetric so that
//! "same" width holds for even kernels too.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

/// Zero padding applied before convolving.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pad {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pad {
    pub const VALID: Pad = Pad {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    /// Width padding that keeps the output width equal to the input width
    /// for a kernel of horizontal extent `k` (asymmetric when `k` is even).
    pub fn same_width(k: usize) -> Pad {
        Pad {
            top: 0,
            bottom: 0,
            left: (k - 1) / 2,
            right: k / 2,
        }
    }
}

/// The convolution kernels of one feature-extractor block family:
/// a temporal kernel, a per-channel depthwise kernel, and a 1x1 pointwise
/// mixing kernel.
#[derive(Clone, Debug)]
pub struct ConvKernels {
    /// [channels, 1, kH, kW], one filter per output channel.
    pub depthwise: Tensor4,
    /// [out_channels, in_channels, 1, 1].
    pub pointwise: Tensor4,
    /// [filters, 1, 1, k].
    pub temporal: Tensor4,
}

fn check_conv_args(x: &Tensor4, w: &Tensor4, groups: usize, pad: Pad) -> Result<[usize; 4]> {
    let [batch, in_c, h, width] = x.shape();
    let [out_c, w_in, kh, kw] = w.shape();
    if groups == 0 || in_c % groups != 0 || out_c % groups != 0 {
        return Err(Error::Shape(format!(
            "groups {groups} must divide in_channels {in_c} and out_channels {out_c}"
        )));
    }
    if w_in != in_c / groups {
        return Err(Error::Shape(format!(
            "kernel expects {w_in} input channels per group, input provides {}",
            in_c / groups
        )));
    }
    let h_padded = h + pad.top + pad.bottom;
    let w_padded = width + pad.left + pad.right;
    if kh > h_padded || kw > w_padded {
        return Err(Error::Shape(format!(
            "kernel {kh}x{kw} larger than padded input {h_padded}x{w_padded}"
        )));
    }
    Ok([batch, out_c, h_padded - kh + 1, w_padded - kw + 1])
}

/// Grouped 2-D convolution. Output channel `o` belongs to group
/// `o / (out_c / groups)` and sees only that group's slice of input channels.
pub fn conv2d_forward(x: &Tensor4, w: &Tensor4, groups: usize, pad: Pad) -> Result<Tensor4> {
    let out_shape = check_conv_args(x, w, groups, pad)?;
    let [_, out_c, out_h, out_w] = out_shape;
    let [_, in_c, in_h, in_w] = x.shape();
    let [_, w_in, kh, kw] = w.shape();
    let per_group_out = out_c / groups;

    let item_len = out_c * out_h * out_w;
    let rows: Vec<Vec<f64>> = (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let mut row = vec![0.0; item_len];
            for o in 0..out_c {
                let group = o / per_group_out;
                let c_base = group * w_in;
                for oh in 0..out_h {
                    for ow in 0..out_w {
                        let mut acc = 0.0;
                        for cg in 0..w_in {
                            let c = c_base + cg;
                            for u in 0..kh {
                                let ih = oh + u;
                                if ih < pad.top || ih - pad.top >= in_h {
                                    continue;
                                }
                                for v in 0..kw {
                                    let iw = ow + v;
                                    if iw < pad.left || iw - pad.left >= in_w {
                                        continue;
                                    }
                                    acc += x.at(b, c, ih - pad.top, iw - pad.left)
                                        * w.at(o, cg, u, v);
                                }
                            }
                        }
                        row[(o * out_h + oh) * out_w + ow] = acc;
                    }
                }
            }
            row
        })
        .collect();

    let mut data = Vec::with_capacity(x.batch() * item_len);
    for row in rows {
        data.extend_from_slice(&row);
    }
    let _ = in_c;
    Tensor4::from_vec(data, out_shape)
}

/// Gradients of the grouped convolution: (d input, d kernel).
///
/// Per-item partials are computed in parallel and reduced in batch order, so
/// results are bit-deterministic.
pub fn conv2d_backward(
    x: &Tensor4,
    w: &Tensor4,
    groups: usize,
    pad: Pad,
    dy: &Tensor4,
) -> Result<(Tensor4, Tensor4)> {
    let out_shape = check_conv_args(x, w, groups, pad)?;
    if dy.shape() != out_shape {
        return Err(Error::Shape(format!(
            "upstream gradient shape {:?} does not match output shape {out_shape:?}",
            dy.shape()
        )));
    }
    let [_, out_c, out_h, out_w] = out_shape;
    let [_, _, in_h, in_w] = x.shape();
    let [_, w_in, kh, kw] = w.shape();
    let per_group_out = out_c / groups;

    let per_item: Vec<(Vec<f64>, Vec<f64>)> = (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let mut dx_item = vec![0.0; x.channels() * in_h * in_w];
            let mut dw_item = vec![0.0; w.len()];
            for o in 0..out_c {
                let group = o / per_group_out;
                let c_base = group * w_in;
                for oh in 0..out_h {
                    for ow in 0..out_w {
                        let g = dy.at(b, o, oh, ow);
                        if g == 0.0 {
                            continue;
                        }
                        for cg in 0..w_in {
                            let c = c_base + cg;
                            for u in 0..kh {
                                let ih = oh + u;
                                if ih < pad.top || ih - pad.top >= in_h {
                                    continue;
                                }
                                for v in 0..kw {
                                    let iw = ow + v;
                                    if iw < pad.left || iw - pad.left >= in_w {
                                        continue;
                                    }
                                    let xi = (c * in_h + (ih - pad.top)) * in_w + (iw - pad.left);
                                    let wi = ((o * w_in + cg) * kh + u) * kw + v;
                                    dw_item[wi] += g * x.data()[b * dx_item.len() + xi];
                                    dx_item[xi] += g * w.data()[wi];
                                }
                            }
                        }
                    }
                }
            }
            (dx_item, dw_item)
        })
        .collect();

    let mut dx = Tensor4::zeros(x.shape());
    let mut dw = Tensor4::zeros(w.shape());
    let item_len = x.channels() * in_h * in_w;
    for (b, (dx_item, dw_item)) in per_item.into_iter().enumerate() {
        dx.data_mut()[b * item_len..(b + 1) * item_len].copy_from_slice(&dx_item);
        for (acc, v) in dw.data_mut().iter_mut().zip(&dw_item) {
            *acc += v;
        }
    }
    Ok((dx, dw))
}

/// Depthwise-then-pointwise convolution: each channel is convolved with its
/// own kernel, then a 1x1 convolution mixes channels.
pub fn separable_conv_forward(
    x: &Tensor4,
    depthwise: &Tensor4,
    pointwise: &Tensor4,
    pad: Pad,
) -> Result<Tensor4> {
    let mid = conv2d_forward(x, depthwise, x.channels(), pad)?;
    conv2d_forward(&mid, pointwise, 1, Pad::VALID)
}
