//! Blocked int8 kernels.
//!
//! Integer accumulation is exact, so these produce bit-identical codes to
//! the reference int8 kernels; only the loop structure differs. Fully
//! connected layers use the reference path.

use alloc::vec;
use alloc::vec::Vec;

use super::optimized::{gemm, im2col_block, is_pointwise, PackedB, Parallel, Serial, BLOCK_ROWS};
use super::quant::{centered, check_accumulator, Requantizer};
use super::reference::{conv_geometry, depthwise_geometry, ConvGeometry};
use super::{ConvAttrs, KernelError, KernelResult, Kernels};
use crate::tensor::{DType, QuantParams, Tensor};

fn codes<'a>(op: &'static str, t: &'a Tensor) -> KernelResult<(&'a [i8], QuantParams)> {
    match (t.as_i8(), t.qparams()) {
        (Some(v), Some(qp)) => Ok((v, qp)),
        _ => Err(KernelError::DTypeMismatch { op, expected: DType::Int8q, actual: t.dtype() }),
    }
}

#[derive(Debug, Clone, Default)]
pub struct QuantizedKernels<P = Serial> {
    parallel: P,
}

impl<P: Parallel> QuantizedKernels<P> {
    pub fn new(parallel: P) -> Self {
        Self { parallel }
    }
}

impl<P: Parallel> Kernels for QuantizedKernels<P> {
    fn qconv2d(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[i32],
        attrs: &ConvAttrs,
        out_qp: QuantParams,
    ) -> KernelResult<Tensor> {
        const OP: &str = "qconv2d";
        let (x, in_qp) = codes(OP, input)?;
        let (wq, w_qp) = codes(OP, weights)?;
        let ConvGeometry { batch, cin, cout, win } = conv_geometry(OP, input, weights, bias.len(), attrs)?;
        check_accumulator(OP, (win.kh, win.kw, cin), in_qp, wq, w_qp, bias, |t, co| t * cout + co)?;
        let xc = centered(x, in_qp);
        let wc = centered(wq, w_qp);
        let rq = Requantizer::new(in_qp.scale(), w_qp.scale(), out_qp, attrs.activation);
        let m = batch * win.out_h * win.out_w;
        let k = win.kh * win.kw * cin;
        let pointwise = is_pointwise(&win);
        let packed = PackedB::new(&wc, k, cout);
        let mut out = vec![0i8; m * cout];
        self.parallel.for_each_chunk(&mut out, BLOCK_ROWS * cout, |blk, chunk| {
            let first = blk * BLOCK_ROWS;
            let rows = chunk.len() / cout;
            let mut acc = vec![0i32; rows * cout];
            if pointwise {
                gemm(&xc[first * k..(first + rows) * k], k, rows, &packed, &mut acc);
            } else {
                let mut panel = Vec::new();
                im2col_block(&xc, &win, cin, first, rows, 0, &mut panel);
                gemm(&panel, k, rows, &packed, &mut acc);
            }
            for (dst_row, acc_row) in chunk.chunks_exact_mut(cout).zip(acc.chunks_exact(cout)) {
                for ((dst, &a), &b) in dst_row.iter_mut().zip(acc_row).zip(bias) {
                    *dst = rq.apply(a + b);
                }
            }
        });
        Ok(Tensor::from_i8([batch, win.out_h, win.out_w, cout], out, out_qp)?)
    }

    fn qdepthwise_conv2d(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[i32],
        attrs: &ConvAttrs,
        out_qp: QuantParams,
    ) -> KernelResult<Tensor> {
        const OP: &str = "qdepthwise_conv2d";
        let (x, in_qp) = codes(OP, input)?;
        let (wq, w_qp) = codes(OP, weights)?;
        let ConvGeometry { batch, cin: c, win, .. } = depthwise_geometry(OP, input, weights, bias.len(), attrs)?;
        check_accumulator(OP, (win.kh, win.kw, 1), in_qp, wq, w_qp, bias, |t, ch| t * c + ch)?;
        let xc = centered(x, in_qp);
        let wc = centered(wq, w_qp);
        let rq = Requantizer::new(in_qp.scale(), w_qp.scale(), out_qp, attrs.activation);
        let row_len = win.out_w * c;
        let mut out = vec![0i8; batch * win.out_h * row_len];
        self.parallel.for_each_chunk(&mut out, row_len, |idx, row| {
            let (b, oy) = (idx / win.out_h, idx % win.out_h);
            let mut acc = vec![0i32; c];
            for (ox, dst) in row.chunks_exact_mut(c).enumerate() {
                acc.copy_from_slice(bias);
                for ky in 0..win.kh {
                    let Some(iy) = win.in_y(oy, ky) else { continue };
                    for kx in 0..win.kw {
                        let Some(ix) = win.in_x(ox, kx) else { continue };
                        let src = ((b * win.in_h + iy) * win.in_w + ix) * c;
                        let tap = (ky * win.kw + kx) * c;
                        for ((a, &xv), &wv) in acc.iter_mut().zip(&xc[src..src + c]).zip(&wc[tap..tap + c]) {
                            *a += xv * wv;
                        }
                    }
                }
                for (d, &a) in dst.iter_mut().zip(&acc) {
                    *d = rq.apply(a);
                }
            }
        });
        Ok(Tensor::from_i8([batch, win.out_h, win.out_w, c], out, out_qp)?)
    }
}
