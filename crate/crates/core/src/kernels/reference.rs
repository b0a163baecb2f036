//! Naive nested-loop kernels.
//!
//! No blocking, no reordering: these are the correctness oracle for every
//! other backend and the total-coverage CPU fallback.

use alloc::vec;
use alloc::vec::Vec;

use super::quant::{centered, check_accumulator, Requantizer};
use super::{expect_dim, Activation, ConvAttrs, ElementwiseOp, KernelError, KernelResult, PoolAttrs, PoolKind, Window};
use crate::tensor::{DType, QuantParams, Tensor};

#[inline]
pub(crate) fn activate(x: f32, activation: Activation) -> f32 {
    match activation {
        Activation::None => x,
        Activation::Relu => x.max(0.0),
    }
}

fn f32s<'a>(op: &'static str, t: &'a Tensor) -> KernelResult<&'a [f32]> {
    t.as_f32().ok_or(KernelError::DTypeMismatch { op, expected: DType::Float32, actual: t.dtype() })
}

fn i8s<'a>(op: &'static str, t: &'a Tensor) -> KernelResult<(&'a [i8], QuantParams)> {
    match (t.as_i8(), t.qparams()) {
        (Some(v), Some(qp)) => Ok((v, qp)),
        _ => Err(KernelError::DTypeMismatch { op, expected: DType::Int8q, actual: t.dtype() }),
    }
}

/// Validated geometry of a standard convolution.
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub win: Window,
}

pub(crate) fn conv_geometry(
    op: &'static str,
    input: &Tensor,
    weights: &Tensor,
    bias_len: usize,
    attrs: &ConvAttrs,
) -> KernelResult<ConvGeometry> {
    let [n, h, w, c] = input.shape();
    let [kh, kw, wcin, cout] = weights.shape();
    expect_dim(op, "input channels", wcin, c)?;
    expect_dim(op, "bias length", cout, bias_len)?;
    let win = Window::new(op, (h, w), (kh, kw), attrs.stride, attrs.padding)?;
    Ok(ConvGeometry { batch: n, cin: c, cout, win })
}

pub(crate) fn depthwise_geometry(
    op: &'static str,
    input: &Tensor,
    weights: &Tensor,
    bias_len: usize,
    attrs: &ConvAttrs,
) -> KernelResult<ConvGeometry> {
    let [n, h, w, c] = input.shape();
    let [kh, kw, wc, mult] = weights.shape();
    expect_dim(op, "channels", wc, c)?;
    expect_dim(op, "channel multiplier", 1, mult)?;
    expect_dim(op, "bias length", c, bias_len)?;
    let win = Window::new(op, (h, w), (kh, kw), attrs.stride, attrs.padding)?;
    Ok(ConvGeometry { batch: n, cin: c, cout: c, win })
}

/// Returns `(batch, features, outputs)` for an affine layer.
pub(crate) fn fc_geometry(
    op: &'static str,
    input: &Tensor,
    weights: &Tensor,
    bias_len: usize,
) -> KernelResult<(usize, usize, usize)> {
    let [n, h, w, c] = input.shape();
    let [one_a, one_b, rows, cols] = weights.shape();
    expect_dim(op, "weight matrix leading extent", 1, one_a * one_b)?;
    expect_dim(op, "flattened input length", rows, h * w * c)?;
    expect_dim(op, "bias length", cols, bias_len)?;
    Ok((n, rows, cols))
}

pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &[f32], attrs: &ConvAttrs) -> KernelResult<Tensor> {
    const OP: &str = "conv2d";
    let x = f32s(OP, input)?;
    let wt = f32s(OP, weights)?;
    let g = conv_geometry(OP, input, weights, bias.len(), attrs)?;
    let ConvGeometry { batch, cin, cout, win } = g;
    let mut out = vec![0.0f32; batch * win.out_h * win.out_w * cout];
    for b in 0..batch {
        for oy in 0..win.out_h {
            for ox in 0..win.out_w {
                for co in 0..cout {
                    let mut acc = 0.0f32;
                    for ky in 0..win.kh {
                        let Some(iy) = win.in_y(oy, ky) else { continue };
                        for kx in 0..win.kw {
                            let Some(ix) = win.in_x(ox, kx) else { continue };
                            for ci in 0..cin {
                                let xv = x[((b * win.in_h + iy) * win.in_w + ix) * cin + ci];
                                let wv = wt[((ky * win.kw + kx) * cin + ci) * cout + co];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b * win.out_h + oy) * win.out_w + ox) * cout + co] =
                        activate(acc + bias[co], attrs.activation);
                }
            }
        }
    }
    Ok(Tensor::from_f32([batch, win.out_h, win.out_w, cout], out)?)
}

pub fn depthwise_conv2d(input: &Tensor, weights: &Tensor, bias: &[f32], attrs: &ConvAttrs) -> KernelResult<Tensor> {
    const OP: &str = "depthwise_conv2d";
    let x = f32s(OP, input)?;
    let wt = f32s(OP, weights)?;
    let ConvGeometry { batch, cin: c, win, .. } = depthwise_geometry(OP, input, weights, bias.len(), attrs)?;
    let mut out = vec![0.0f32; batch * win.out_h * win.out_w * c];
    for b in 0..batch {
        for oy in 0..win.out_h {
            for ox in 0..win.out_w {
                for ch in 0..c {
                    let mut acc = 0.0f32;
                    for ky in 0..win.kh {
                        let Some(iy) = win.in_y(oy, ky) else { continue };
                        for kx in 0..win.kw {
                            let Some(ix) = win.in_x(ox, kx) else { continue };
                            acc += x[((b * win.in_h + iy) * win.in_w + ix) * c + ch] * wt[(ky * win.kw + kx) * c + ch];
                        }
                    }
                    out[((b * win.out_h + oy) * win.out_w + ox) * c + ch] = activate(acc + bias[ch], attrs.activation);
                }
            }
        }
    }
    Ok(Tensor::from_f32([batch, win.out_h, win.out_w, c], out)?)
}

/// Affine map over the flattened `(h, w, c)` features of each batch item.
/// `weights` has shape `(1, 1, features, outputs)`.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &[f32], activation: Activation) -> KernelResult<Tensor> {
    const OP: &str = "fully_connected";
    let x = f32s(OP, input)?;
    let wt = f32s(OP, weights)?;
    let (batch, rows, cols) = fc_geometry(OP, input, weights, bias.len())?;
    let mut out = vec![0.0f32; batch * cols];
    for b in 0..batch {
        for j in 0..cols {
            let mut acc = 0.0f32;
            for i in 0..rows {
                acc += x[b * rows + i] * wt[i * cols + j];
            }
            out[b * cols + j] = activate(acc + bias[j], activation);
        }
    }
    Ok(Tensor::from_f32([batch, 1, 1, cols], out)?)
}

/// Max or average pooling. Average divides by the number of in-bounds
/// elements, so border outputs ignore the padding.
pub fn pool(input: &Tensor, attrs: &PoolAttrs) -> KernelResult<Tensor> {
    const OP: &str = "pool";
    let x = f32s(OP, input)?;
    let [n, h, w, c] = input.shape();
    let win = Window::new(OP, (h, w), attrs.window, attrs.stride, attrs.padding)?;
    let mut out = vec![0.0f32; n * win.out_h * win.out_w * c];
    for b in 0..n {
        for oy in 0..win.out_h {
            for ox in 0..win.out_w {
                for ch in 0..c {
                    let mut max = f32::NEG_INFINITY;
                    let mut sum = 0.0f32;
                    let mut count = 0usize;
                    for ky in 0..win.kh {
                        let Some(iy) = win.in_y(oy, ky) else { continue };
                        for kx in 0..win.kw {
                            let Some(ix) = win.in_x(ox, kx) else { continue };
                            let v = x[((b * h + iy) * w + ix) * c + ch];
                            max = max.max(v);
                            sum += v;
                            count += 1;
                        }
                    }
                    out[((b * win.out_h + oy) * win.out_w + ox) * c + ch] = match attrs.kind {
                        PoolKind::Max => max,
                        PoolKind::Avg => sum / count as f32,
                    };
                }
            }
        }
    }
    Ok(Tensor::from_f32([n, win.out_h, win.out_w, c], out)?)
}

/// Source coordinate and blend weight for one output position under
/// half-pixel sampling (align-corners off), clamped to the input.
#[inline]
pub(crate) fn bilinear_source(out_pos: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((out_pos as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (libm::floor(src) as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, (src - lo as f64).min(1.0) as f32)
}

pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> KernelResult<Tensor> {
    const OP: &str = "resize_bilinear";
    let x = f32s(OP, input)?;
    if out_h == 0 || out_w == 0 {
        return Err(KernelError::InvalidAttribute { op: OP, detail: alloc::format!("target {out_h}x{out_w}") });
    }
    let [n, h, w, c] = input.shape();
    let mut out = vec![0.0f32; n * out_h * out_w * c];
    for b in 0..n {
        for oy in 0..out_h {
            let (y0, y1, fy) = bilinear_source(oy, h, out_h);
            for ox in 0..out_w {
                let (x0, x1, fx) = bilinear_source(ox, w, out_w);
                for ch in 0..c {
                    let at = |y: usize, xx: usize| x[((b * h + y) * w + xx) * c + ch];
                    let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
                    let bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
                    out[((b * out_h + oy) * out_w + ox) * c + ch] = top + (bottom - top) * fy;
                }
            }
        }
    }
    Ok(Tensor::from_f32([n, out_h, out_w, c], out)?)
}

pub fn add(a: &Tensor, b: &Tensor, activation: Activation) -> KernelResult<Tensor> {
    const OP: &str = "add";
    let (xa, xb) = (f32s(OP, a)?, f32s(OP, b)?);
    let (sa, sb) = (a.shape(), b.shape());
    for (axis, name) in ["batch", "height", "width", "channels"].into_iter().enumerate() {
        expect_dim(OP, name, sa[axis], sb[axis])?;
    }
    let out = xa.iter().zip(xb).map(|(&p, &q)| activate(p + q, activation)).collect();
    Ok(Tensor::from_f32(sa, out)?)
}

pub fn relu(input: &Tensor) -> KernelResult<Tensor> {
    let x = f32s("relu", input)?;
    Ok(Tensor::from_f32(input.shape(), x.iter().map(|&v| v.max(0.0)).collect())?)
}

pub fn concat_channels(inputs: &[&Tensor]) -> KernelResult<Tensor> {
    const OP: &str = "concat_channels";
    let first = inputs.first().ok_or(KernelError::InvalidAttribute { op: OP, detail: "no operands".into() })?;
    let [n, h, w, _] = first.shape();
    let mut total_c = 0;
    let mut parts = Vec::with_capacity(inputs.len());
    for t in inputs {
        let [tn, th, tw, tc] = t.shape();
        expect_dim(OP, "batch", n, tn)?;
        expect_dim(OP, "height", h, th)?;
        expect_dim(OP, "width", w, tw)?;
        parts.push((f32s(OP, t)?, tc));
        total_c += tc;
    }
    let mut out = Vec::with_capacity(n * h * w * total_c);
    for pix in 0..n * h * w {
        for (data, c) in &parts {
            out.extend_from_slice(&data[pix * c..(pix + 1) * c]);
        }
    }
    Ok(Tensor::from_f32([n, h, w, total_c], out)?)
}

/// Softmax over the channel axis of every pixel.
pub fn softmax(input: &Tensor) -> KernelResult<Tensor> {
    let x = f32s("softmax", input)?;
    let c = input.shape()[3];
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(c) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = row.iter().map(|&v| libm::exp(f64::from(v - max))).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|&e| (e / sum) as f32));
    }
    Ok(Tensor::from_f32(input.shape(), out)?)
}

/// Dispatches one of the elementwise family by name.
pub fn elementwise(op: ElementwiseOp, operands: &[&Tensor]) -> KernelResult<Tensor> {
    let need = |k: usize| {
        if operands.len() == k {
            Ok(())
        } else {
            Err(KernelError::InvalidAttribute {
                op: "elementwise",
                detail: alloc::format!("{op:?} takes {k} operands, got {}", operands.len()),
            })
        }
    };
    match op {
        ElementwiseOp::Add => {
            need(2)?;
            add(operands[0], operands[1], Activation::None)
        }
        ElementwiseOp::Relu => {
            need(1)?;
            relu(operands[0])
        }
        ElementwiseOp::Softmax => {
            need(1)?;
            softmax(operands[0])
        }
        ElementwiseOp::ConcatChannels => concat_channels(operands),
    }
}

pub fn qconv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &[i32],
    attrs: &ConvAttrs,
    out_qp: QuantParams,
) -> KernelResult<Tensor> {
    const OP: &str = "qconv2d";
    let (x, in_qp) = i8s(OP, input)?;
    let (wq, w_qp) = i8s(OP, weights)?;
    let ConvGeometry { batch, cin, cout, win } = conv_geometry(OP, input, weights, bias.len(), attrs)?;
    check_accumulator(OP, (win.kh, win.kw, cin), in_qp, wq, w_qp, bias, |t, co| t * cout + co)?;
    let xc = centered(x, in_qp);
    let wc = centered(wq, w_qp);
    let rq = Requantizer::new(in_qp.scale(), w_qp.scale(), out_qp, attrs.activation);
    let mut out = vec![0i8; batch * win.out_h * win.out_w * cout];
    for b in 0..batch {
        for oy in 0..win.out_h {
            for ox in 0..win.out_w {
                for co in 0..cout {
                    let mut acc = bias[co];
                    for ky in 0..win.kh {
                        let Some(iy) = win.in_y(oy, ky) else { continue };
                        for kx in 0..win.kw {
                            let Some(ix) = win.in_x(ox, kx) else { continue };
                            for ci in 0..cin {
                                acc += xc[((b * win.in_h + iy) * win.in_w + ix) * cin + ci]
                                    * wc[((ky * win.kw + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[((b * win.out_h + oy) * win.out_w + ox) * cout + co] = rq.apply(acc);
                }
            }
        }
    }
    Ok(Tensor::from_i8([batch, win.out_h, win.out_w, cout], out, out_qp)?)
}

pub fn qdepthwise_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &[i32],
    attrs: &ConvAttrs,
    out_qp: QuantParams,
) -> KernelResult<Tensor> {
    const OP: &str = "qdepthwise_conv2d";
    let (x, in_qp) = i8s(OP, input)?;
    let (wq, w_qp) = i8s(OP, weights)?;
    let ConvGeometry { batch, cin: c, win, .. } = depthwise_geometry(OP, input, weights, bias.len(), attrs)?;
    check_accumulator(OP, (win.kh, win.kw, 1), in_qp, wq, w_qp, bias, |t, ch| t * c + ch)?;
    let xc = centered(x, in_qp);
    let wc = centered(wq, w_qp);
    let rq = Requantizer::new(in_qp.scale(), w_qp.scale(), out_qp, attrs.activation);
    let mut out = vec![0i8; batch * win.out_h * win.out_w * c];
    for b in 0..batch {
        for oy in 0..win.out_h {
            for ox in 0..win.out_w {
                for ch in 0..c {
                    let mut acc = bias[ch];
                    for ky in 0..win.kh {
                        let Some(iy) = win.in_y(oy, ky) else { continue };
                        for kx in 0..win.kw {
                            let Some(ix) = win.in_x(ox, kx) else { continue };
                            acc += xc[((b * win.in_h + iy) * win.in_w + ix) * c + ch] * wc[(ky * win.kw + kx) * c + ch];
                        }
                    }
                    out[((b * win.out_h + oy) * win.out_w + ox) * c + ch] = rq.apply(acc);
                }
            }
        }
    }
    Ok(Tensor::from_i8([batch, win.out_h, win.out_w, c], out, out_qp)?)
}

pub fn qfully_connected(
    input: &Tensor,
    weights: &Tensor,
    bias: &[i32],
    activation: Activation,
    out_qp: QuantParams,
) -> KernelResult<Tensor> {
    const OP: &str = "qfully_connected";
    let (x, in_qp) = i8s(OP, input)?;
    let (wq, w_qp) = i8s(OP, weights)?;
    let (batch, rows, cols) = fc_geometry(OP, input, weights, bias.len())?;
    let limit = super::quant::MAX_QKERNEL * super::quant::MAX_QKERNEL * super::quant::MAX_QCHANNELS;
    if rows > limit {
        return Err(KernelError::Unsupported {
            op: OP,
            detail: alloc::format!("{rows} inputs exceed the int8 limit of {limit}"),
        });
    }
    let zp_x = i64::from(in_qp.zero_point());
    let max_dev_x = (127 - zp_x).max(zp_x + 128);
    let wc = centered(wq, w_qp);
    for (j, &b) in bias.iter().enumerate() {
        let sum: i64 = (0..rows).map(|i| i64::from(wc[i * cols + j]).abs()).sum();
        if sum * max_dev_x + i64::from(b).abs() > i64::from(i32::MAX) {
            return Err(KernelError::Unsupported {
                op: OP,
                detail: alloc::format!("output {j} could overflow the 32-bit accumulator"),
            });
        }
    }
    let xc = centered(x, in_qp);
    let rq = Requantizer::new(in_qp.scale(), w_qp.scale(), out_qp, activation);
    let mut out = vec![0i8; batch * cols];
    for b in 0..batch {
        for j in 0..cols {
            let mut acc = bias[j];
            for i in 0..rows {
                acc += xc[b * rows + i] * wc[i * cols + j];
            }
            out[b * cols + j] = rq.apply(acc);
        }
    }
    Ok(Tensor::from_i8([batch, 1, 1, cols], out, out_qp)?)
}
