//! Cache-blocked float kernels.
//!
//! Convolutions are lowered to GEMM over fixed-size blocks of output pixels:
//! each block gathers its receptive fields into a panel (im2col) and is
//! multiplied against the weight matrix, which in `(kh, kw, cin, cout)` layout
//! already is the `K x N` right-hand side. Work is split across threads only
//! by output block, and every output element reduces over `K` in the order
//! the reference kernels use, so results match them bit for bit at any
//! thread count.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{AddAssign, Mul};

use super::reference::{activate, conv_geometry, depthwise_geometry, fc_geometry, ConvGeometry};
use super::{Activation, ConvAttrs, KernelError, KernelResult, Kernels, Window};
use crate::tensor::{DType, Tensor};

/// Output pixels per GEMM block.
pub const BLOCK_ROWS: usize = 64;
const MR: usize = 4;
const NR: usize = 8;

/// Runs independent work items over disjoint chunks of an output buffer.
pub trait Parallel: Send + Sync {
    /// Calls `f(index, chunk)` for every `chunk_len`-sized chunk of `out`
    /// (the last chunk may be shorter).
    fn for_each_chunk<T, F>(&self, out: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync;

    fn threads(&self) -> usize {
        1
    }
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Parallel for Serial {
    fn for_each_chunk<T, F>(&self, out: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync,
    {
        for (i, chunk) in out.chunks_mut(chunk_len.max(1)).enumerate() {
            f(i, chunk);
        }
    }
}

/// Right-hand GEMM operand split into `NR`-column panels, each stored as
/// `k` contiguous rows of `NR` values (zero-padded past `n`).
pub(crate) struct PackedB<T> {
    data: Vec<T>,
    k: usize,
    n: usize,
}

impl<T: Copy + Default> PackedB<T> {
    pub(crate) fn new(b: &[T], k: usize, n: usize) -> Self {
        let panels = n.div_ceil(NR);
        let mut data = vec![T::default(); panels * k * NR];
        for (jp, panel) in data.chunks_exact_mut(k * NR).enumerate() {
            let j = jp * NR;
            let width = NR.min(n - j);
            for (p, dst) in panel.chunks_exact_mut(NR).enumerate() {
                dst[..width].copy_from_slice(&b[p * n + j..p * n + j + width]);
            }
        }
        Self { data, k, n }
    }
}

/// `c[rows x n] = a[rows x k] * b[k x n]`, with `a` rows `lda` apart.
///
/// Each output element is a single accumulator running over `k` in
/// ascending order, the same reduction the reference kernels perform.
pub(crate) fn gemm<T>(a: &[T], lda: usize, rows: usize, b: &PackedB<T>, c: &mut [T])
where
    T: Copy + Default + Mul<Output = T> + AddAssign,
{
    let (k, n) = (b.k, b.n);
    for (jp, panel) in b.data.chunks_exact(k * NR).enumerate() {
        let j = jp * NR;
        let width = NR.min(n - j);
        let mut i = 0;
        while i + MR <= rows {
            let ar: [&[T]; MR] = core::array::from_fn(|r| &a[(i + r) * lda..(i + r) * lda + k]);
            let mut acc = [[T::default(); NR]; MR];
            for (p, bv) in panel.chunks_exact(NR).enumerate() {
                let bv: &[T; NR] = bv.try_into().expect("panel width");
                for r in 0..MR {
                    let av = ar[r][p];
                    for q in 0..NR {
                        acc[r][q] += av * bv[q];
                    }
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                c[(i + r) * n + j..(i + r) * n + j + width].copy_from_slice(&acc_row[..width]);
            }
            i += MR;
        }
        for r in i..rows {
            let arow = &a[r * lda..r * lda + k];
            let mut acc = [T::default(); NR];
            for (&av, bv) in arow.iter().zip(panel.chunks_exact(NR)) {
                for q in 0..NR {
                    acc[q] += av * bv[q];
                }
            }
            c[r * n + j..r * n + j + width].copy_from_slice(&acc[..width]);
        }
    }
}

/// Gathers the receptive fields of output rows `first..first + rows` into a
/// `rows x (kh * kw * cin)` panel, writing `pad` for out-of-bounds taps.
pub(crate) fn im2col_block<T: Copy>(
    x: &[T],
    win: &Window,
    cin: usize,
    first: usize,
    rows: usize,
    pad: T,
    panel: &mut Vec<T>,
) {
    let k = win.kh * win.kw * cin;
    panel.clear();
    panel.resize(rows * k, pad);
    let per_image = win.out_h * win.out_w;
    for r in 0..rows {
        let m = first + r;
        let (b, rem) = (m / per_image, m % per_image);
        let (oy, ox) = (rem / win.out_w, rem % win.out_w);
        let dst = &mut panel[r * k..(r + 1) * k];
        for ky in 0..win.kh {
            let Some(iy) = win.in_y(oy, ky) else { continue };
            for kx in 0..win.kw {
                let Some(ix) = win.in_x(ox, kx) else { continue };
                let src = ((b * win.in_h + iy) * win.in_w + ix) * cin;
                let off = (ky * win.kw + kx) * cin;
                dst[off..off + cin].copy_from_slice(&x[src..src + cin]);
            }
        }
    }
}

/// True when the input itself is the im2col matrix.
pub(crate) fn is_pointwise(win: &Window) -> bool {
    win.kh == 1 && win.kw == 1 && win.stride_h == 1 && win.stride_w == 1 && win.pad_top == 0 && win.pad_left == 0
}

fn f32_or_err<'a>(op: &'static str, t: &'a Tensor) -> KernelResult<&'a [f32]> {
    t.as_f32().ok_or(KernelError::DTypeMismatch { op, expected: DType::Float32, actual: t.dtype() })
}

/// Blocked float kernels, generic over the work scheduler.
#[derive(Debug, Clone, Default)]
pub struct OptimizedKernels<P = Serial> {
    parallel: P,
}

impl<P: Parallel> OptimizedKernels<P> {
    pub fn new(parallel: P) -> Self {
        Self { parallel }
    }

    pub fn parallel(&self) -> &P {
        &self.parallel
    }
}

impl<P: Parallel> Kernels for OptimizedKernels<P> {
    fn conv2d(&self, input: &Tensor, weights: &Tensor, bias: &[f32], attrs: &ConvAttrs) -> KernelResult<Tensor> {
        const OP: &str = "conv2d";
        let x = f32_or_err(OP, input)?;
        let wt = f32_or_err(OP, weights)?;
        let ConvGeometry { batch, cin, cout, win } = conv_geometry(OP, input, weights, bias.len(), attrs)?;
        let m = batch * win.out_h * win.out_w;
        let k = win.kh * win.kw * cin;
        let pointwise = is_pointwise(&win);
        let packed = PackedB::new(wt, k, cout);
        let mut out = vec![0.0f32; m * cout];
        self.parallel.for_each_chunk(&mut out, BLOCK_ROWS * cout, |blk, chunk| {
            let first = blk * BLOCK_ROWS;
            let rows = chunk.len() / cout;
            if pointwise {
                gemm(&x[first * k..(first + rows) * k], k, rows, &packed, chunk);
            } else {
                let mut panel = Vec::new();
                im2col_block(x, &win, cin, first, rows, 0.0, &mut panel);
                gemm(&panel, k, rows, &packed, chunk);
            }
            for row in chunk.chunks_exact_mut(cout) {
                for (v, &b) in row.iter_mut().zip(bias) {
                    *v = activate(*v + b, attrs.activation);
                }
            }
        });
        Ok(Tensor::from_f32([batch, win.out_h, win.out_w, cout], out)?)
    }

    fn depthwise_conv2d(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[f32],
        attrs: &ConvAttrs,
    ) -> KernelResult<Tensor> {
        const OP: &str = "depthwise_conv2d";
        let x = f32_or_err(OP, input)?;
        let wt = f32_or_err(OP, weights)?;
        let ConvGeometry { batch, cin: c, win, .. } = depthwise_geometry(OP, input, weights, bias.len(), attrs)?;
        let row_len = win.out_w * c;
        let mut out = vec![0.0f32; batch * win.out_h * row_len];
        self.parallel.for_each_chunk(&mut out, row_len, |idx, row| {
            let (b, oy) = (idx / win.out_h, idx % win.out_h);
            for (ox, acc) in row.chunks_exact_mut(c).enumerate() {
                acc.fill(0.0);
                for ky in 0..win.kh {
                    let Some(iy) = win.in_y(oy, ky) else { continue };
                    for kx in 0..win.kw {
                        let Some(ix) = win.in_x(ox, kx) else { continue };
                        let src = ((b * win.in_h + iy) * win.in_w + ix) * c;
                        let tap = (ky * win.kw + kx) * c;
                        for ((a, &xv), &wv) in acc.iter_mut().zip(&x[src..src + c]).zip(&wt[tap..tap + c]) {
                            *a += xv * wv;
                        }
                    }
                }
                for (a, &bv) in acc.iter_mut().zip(bias) {
                    *a = activate(*a + bv, attrs.activation);
                }
            }
        });
        Ok(Tensor::from_f32([batch, win.out_h, win.out_w, c], out)?)
    }

    fn fully_connected(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[f32],
        activation: Activation,
    ) -> KernelResult<Tensor> {
        const OP: &str = "fully_connected";
        let x = f32_or_err(OP, input)?;
        let wt = f32_or_err(OP, weights)?;
        let (batch, rows, cols) = fc_geometry(OP, input, weights, bias.len())?;
        let mut out = vec![0.0f32; batch * cols];
        gemm(x, rows, batch, &PackedB::new(wt, rows, cols), &mut out);
        for row in out.chunks_exact_mut(cols) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v = activate(*v + b, activation);
            }
        }
        Ok(Tensor::from_f32([batch, 1, 1, cols], out)?)
    }
}
