//! Operator kernels.
//!
//! [`reference`] holds the naive nested-loop implementations that every other
//! kernel set is checked against. [`optimized`] and [`quantized`] provide the
//! blocked float and int8 paths. All of them are reached through [`Kernels`],
//! whose default methods fall through to the reference implementation.

pub mod optimized;
pub mod quant;
pub mod quantized;
pub mod reference;

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{DType, QuantParams, Tensor, TensorError};

/// TensorFlow-style padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Output extent `ceil(in / stride)`, padding split with the extra cell at the end.
    Same,
    /// No padding, output extent `(in - k) / stride + 1`.
    Valid,
}

/// Activation applied to a kernel's output before it is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    None,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvAttrs {
    pub stride: (usize, usize),
    pub padding: Padding,
    pub activation: Activation,
}

impl ConvAttrs {
    pub fn new(stride: (usize, usize), padding: Padding) -> Self {
        Self { stride, padding, activation: Activation::None }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolAttrs {
    pub kind: PoolKind,
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Relu,
    ConcatChannels,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("{op}: {dim} mismatch (expected {expected}, got {actual})")]
    ShapeMismatch { op: &'static str, dim: &'static str, expected: usize, actual: usize },
    #[error("{op}: expected {expected} input, got {actual}")]
    DTypeMismatch { op: &'static str, expected: DType, actual: DType },
    #[error("{op}: window {window} exceeds padded input extent {input}")]
    WindowTooLarge { op: &'static str, window: usize, input: usize },
    #[error("{op}: invalid attribute: {detail}")]
    InvalidAttribute { op: &'static str, detail: String },
    #[error("{op}: unsupported configuration: {detail}")]
    Unsupported { op: &'static str, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type KernelResult<T> = Result<T, KernelError>;

/// Output extent and leading pad of one spatial axis.
pub fn output_extent(
    op: &'static str,
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> KernelResult<(usize, usize)> {
    if stride == 0 || kernel == 0 {
        return Err(KernelError::InvalidAttribute {
            op,
            detail: alloc::format!("kernel {kernel} and stride {stride} must be positive"),
        });
    }
    match padding {
        Padding::Valid => {
            if kernel > input {
                return Err(KernelError::WindowTooLarge { op, window: kernel, input });
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, needed / 2))
        }
    }
}

/// Geometry shared by convolution-like kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl Window {
    pub fn new(
        op: &'static str,
        (in_h, in_w): (usize, usize),
        (kh, kw): (usize, usize),
        (stride_h, stride_w): (usize, usize),
        padding: Padding,
    ) -> KernelResult<Self> {
        let (out_h, pad_top) = output_extent(op, in_h, kh, stride_h, padding)?;
        let (out_w, pad_left) = output_extent(op, in_w, kw, stride_w, padding)?;
        Ok(Self { in_h, in_w, out_h, out_w, kh, kw, stride_h, stride_w, pad_top, pad_left })
    }

    /// Input coordinate for output `o` and tap `k`, or `None` in the padding.
    #[inline]
    pub fn in_y(&self, oy: usize, ky: usize) -> Option<usize> {
        (oy * self.stride_h + ky).checked_sub(self.pad_top).filter(|&y| y < self.in_h)
    }

    #[inline]
    pub fn in_x(&self, ox: usize, kx: usize) -> Option<usize> {
        (ox * self.stride_w + kx).checked_sub(self.pad_left).filter(|&x| x < self.in_w)
    }
}

pub(crate) fn expect_dtype(op: &'static str, t: &Tensor, dtype: DType) -> KernelResult<()> {
    if t.dtype() != dtype {
        return Err(KernelError::DTypeMismatch { op, expected: dtype, actual: t.dtype() });
    }
    Ok(())
}

pub(crate) fn expect_dim(op: &'static str, dim: &'static str, expected: usize, actual: usize) -> KernelResult<()> {
    if expected != actual {
        return Err(KernelError::ShapeMismatch { op, dim, expected, actual });
    }
    Ok(())
}

/// A complete set of operator implementations.
///
/// Every method defaults to [`reference`]; a backend overrides the operators
/// it accelerates. Implementations must be pure: identical inputs give
/// identical outputs regardless of internal scheduling.
pub trait Kernels: Send + Sync {
    fn conv2d(&self, input: &Tensor, weights: &Tensor, bias: &[f32], attrs: &ConvAttrs) -> KernelResult<Tensor> {
        reference::conv2d(input, weights, bias, attrs)
    }

    fn depthwise_conv2d(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[f32],
        attrs: &ConvAttrs,
    ) -> KernelResult<Tensor> {
        reference::depthwise_conv2d(input, weights, bias, attrs)
    }

    fn fully_connected(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[f32],
        activation: Activation,
    ) -> KernelResult<Tensor> {
        reference::fully_connected(input, weights, bias, activation)
    }

    fn pool(&self, input: &Tensor, attrs: &PoolAttrs) -> KernelResult<Tensor> {
        reference::pool(input, attrs)
    }

    fn resize_bilinear(&self, input: &Tensor, out_h: usize, out_w: usize) -> KernelResult<Tensor> {
        reference::resize_bilinear(input, out_h, out_w)
    }

    fn add(&self, a: &Tensor, b: &Tensor, activation: Activation) -> KernelResult<Tensor> {
        reference::add(a, b, activation)
    }

    fn relu(&self, input: &Tensor) -> KernelResult<Tensor> {
        reference::relu(input)
    }

    fn concat_channels(&self, inputs: &[&Tensor]) -> KernelResult<Tensor> {
        reference::concat_channels(inputs)
    }

    fn softmax(&self, input: &Tensor) -> KernelResult<Tensor> {
        reference::softmax(input)
    }

    fn qconv2d(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[i32],
        attrs: &ConvAttrs,
        out_qp: QuantParams,
    ) -> KernelResult<Tensor> {
        reference::qconv2d(input, weights, bias, attrs, out_qp)
    }

    fn qdepthwise_conv2d(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[i32],
        attrs: &ConvAttrs,
        out_qp: QuantParams,
    ) -> KernelResult<Tensor> {
        reference::qdepthwise_conv2d(input, weights, bias, attrs, out_qp)
    }

    fn qfully_connected(
        &self,
        input: &Tensor,
        weights: &Tensor,
        bias: &[i32],
        activation: Activation,
        out_qp: QuantParams,
    ) -> KernelResult<Tensor> {
        reference::qfully_connected(input, weights, bias, activation, out_qp)
    }
}
