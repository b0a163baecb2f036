//! Per-tensor affine int8 quantization.
//!
//! `q = clamp(round(x / scale) + zero_point, -128, 127)` with rounding half
//! away from zero, and `x = scale * (q - zero_point)`.

use alloc::format;
use alloc::vec::Vec;

use super::{expect_dtype, Activation, KernelError, KernelResult};
use crate::tensor::{DType, QuantParams, Tensor};

/// Rounds half away from zero, saturating to the `i32` range.
#[inline]
pub fn round_half_away(x: f64) -> i32 {
    let r = libm::round(x);
    if r >= i32::MAX as f64 {
        i32::MAX
    } else if r <= i32::MIN as f64 {
        i32::MIN
    } else {
        r as i32
    }
}

#[inline]
pub fn quantize_value(x: f32, qp: QuantParams) -> i8 {
    let q = round_half_away(f64::from(x) / f64::from(qp.scale())).saturating_add(i32::from(qp.zero_point()));
    q.clamp(-128, 127) as i8
}

#[inline]
pub fn dequantize_value(q: i8, qp: QuantParams) -> f32 {
    qp.scale() * (i32::from(q) - i32::from(qp.zero_point())) as f32
}

pub fn quantize(input: &Tensor, qp: QuantParams) -> KernelResult<Tensor> {
    expect_dtype("quantize", input, DType::Float32)?;
    let data = input.as_f32().unwrap_or_default();
    let values = data.iter().map(|&x| quantize_value(x, qp)).collect();
    Ok(Tensor::from_i8(input.shape(), values, qp)?)
}

pub fn dequantize(input: &Tensor) -> KernelResult<Tensor> {
    expect_dtype("dequantize", input, DType::Int8q)?;
    Ok(Tensor::from_f32(input.shape(), input.to_real())?)
}

/// Maps 32-bit accumulators onto the output code space.
#[derive(Debug, Clone, Copy)]
pub struct Requantizer {
    multiplier: f64,
    zero_point: i32,
    lo: i32,
}

impl Requantizer {
    pub fn new(input_scale: f32, weight_scale: f32, out_qp: QuantParams, activation: Activation) -> Self {
        let zero_point = i32::from(out_qp.zero_point());
        let lo = match activation {
            Activation::None => -128,
            Activation::Relu => zero_point,
        };
        Self {
            multiplier: f64::from(input_scale) * f64::from(weight_scale) / f64::from(out_qp.scale()),
            zero_point,
            lo,
        }
    }

    #[inline]
    pub fn apply(&self, acc: i32) -> i8 {
        let q = round_half_away(f64::from(acc) * self.multiplier).saturating_add(self.zero_point);
        q.clamp(self.lo, 127) as i8
    }
}

/// Largest supported kernel extent for int8 convolutions.
pub const MAX_QKERNEL: usize = 9;
/// Largest supported input channel count for int8 convolutions.
pub const MAX_QCHANNELS: usize = 1024;

/// Rejects int8 configurations whose worst-case accumulator could leave the
/// `i32` range.
///
/// `taps` is the filter footprint `(kh, kw, cin)`. Besides the fixed size
/// limits, the bound is checked per output channel against the actual
/// weights: `sum |w - zp_w| * max |x - zp_x| + |bias|`.
pub fn check_accumulator(
    op: &'static str,
    taps: (usize, usize, usize),
    input_qp: QuantParams,
    weights: &[i8],
    weight_qp: QuantParams,
    bias: &[i32],
    weight_index: impl Fn(usize, usize) -> usize,
) -> KernelResult<()> {
    let (kh, kw, cin) = taps;
    if kh > MAX_QKERNEL || kw > MAX_QKERNEL || cin > MAX_QCHANNELS {
        return Err(KernelError::Unsupported {
            op,
            detail: format!(
                "{kh}x{kw}x{cin} filter exceeds the {MAX_QKERNEL}x{MAX_QKERNEL}x{MAX_QCHANNELS} int8 limit"
            ),
        });
    }
    let zp_x = i64::from(input_qp.zero_point());
    let max_dev_x = (127 - zp_x).max(zp_x + 128);
    let zp_w = i64::from(weight_qp.zero_point());
    let per_channel = kh * kw * cin;
    for (co, &b) in bias.iter().enumerate() {
        let sum: i64 = (0..per_channel).map(|t| (i64::from(weights[weight_index(t, co)]) - zp_w).abs()).sum();
        if sum * max_dev_x + i64::from(b).abs() > i64::from(i32::MAX) {
            return Err(KernelError::Unsupported {
                op,
                detail: format!("output channel {co} could overflow the 32-bit accumulator"),
            });
        }
    }
    Ok(())
}

/// Weight codes with the zero point removed, widened for accumulation.
pub(crate) fn centered(values: &[i8], qp: QuantParams) -> Vec<i32> {
    let zp = i32::from(qp.zero_point());
    values.iter().map(|&v| i32::from(v) - zp).collect()
}
