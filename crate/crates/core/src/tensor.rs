//! Dense NHWC tensors in float32 or per-tensor quantized int8.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Extents in `(batch, height, width, channels)` order.
pub type Shape = [usize; 4];

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    Float32,
    Int8q,
}

impl DType {
    /// Storage width of one element.
    pub fn width(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Int8q => 1,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::Float32 => "float32",
            DType::Int8q => "int8q",
        })
    }
}

/// Affine mapping between int8 codes and reals: `x = scale * (q - zero_point)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantParams")]
pub struct QuantParams {
    scale: f32,
    zero_point: i8,
}

#[derive(Deserialize)]
struct RawQuantParams {
    scale: f32,
    zero_point: i32,
}

impl TryFrom<RawQuantParams> for QuantParams {
    type Error = TensorError;

    fn try_from(raw: RawQuantParams) -> Result<Self, Self::Error> {
        Self::new(raw.scale, raw.zero_point)
    }
}

impl QuantParams {
    pub fn new(scale: f32, zero_point: i32) -> Result<Self, TensorError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(TensorError::InvalidScale(scale));
        }
        let zero_point = i8::try_from(zero_point).map_err(|_| TensorError::InvalidZeroPoint(zero_point))?;
        Ok(Self { scale, zero_point })
    }

    /// Asymmetric parameters covering `[min, max]`, widened to include zero
    /// so that zero stays exactly representable.
    pub fn from_range(min: f32, max: f32) -> Self {
        let lo = min.min(0.0);
        let hi = max.max(0.0);
        let span = hi - lo;
        if !(span > f32::EPSILON) {
            return Self { scale: 1.0 / 255.0, zero_point: -128 };
        }
        let scale = span / 255.0;
        let zp = crate::kernels::quant::round_half_away(-128.0 - f64::from(lo) / f64::from(scale));
        Self { scale, zero_point: zp.clamp(-128, 127) as i8 }
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn zero_point(&self) -> i8 {
        self.zero_point
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {actual} were supplied")]
    LengthMismatch { shape: Shape, expected: usize, actual: usize },
    #[error("extent {axis} of shape {shape:?} is zero")]
    ZeroExtent { shape: Shape, axis: usize },
    #[error("quantization scale must be positive and finite, got {0}")]
    InvalidScale(f32),
    #[error("zero point {0} is outside [-128, 127]")]
    InvalidZeroPoint(i32),
}

/// Element storage. Int8 data always carries its quantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I8 { values: Vec<i8>, qparams: QuantParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: TensorData,
}

fn check_shape(shape: Shape, len: usize) -> Result<(), TensorError> {
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(TensorError::ZeroExtent { shape, axis });
    }
    let expected = shape.iter().product::<usize>();
    if expected != len {
        return Err(TensorError::LengthMismatch { shape, expected, actual: len });
    }
    Ok(())
}

impl Tensor {
    pub fn from_f32(shape: Shape, data: Vec<f32>) -> Result<Self, TensorError> {
        check_shape(shape, data.len())?;
        Ok(Self { shape, data: TensorData::F32(data) })
    }

    pub fn from_i8(shape: Shape, values: Vec<i8>, qparams: QuantParams) -> Result<Self, TensorError> {
        check_shape(shape, values.len())?;
        Ok(Self { shape, data: TensorData::I8 { values, qparams } })
    }

    pub fn zeros(shape: Shape) -> Result<Self, TensorError> {
        let n = shape.iter().product();
        Self::from_f32(shape, vec![0.0; n])
    }

    pub fn filled(shape: Shape, value: f32) -> Result<Self, TensorError> {
        let n = shape.iter().product();
        Self::from_f32(shape, vec![value; n])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::Float32,
            TensorData::I8 { .. } => DType::Int8q,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn size_bytes(&self) -> usize {
        self.len() * self.dtype().width()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn qparams(&self) -> Option<QuantParams> {
        match &self.data {
            TensorData::F32(_) => None,
            TensorData::I8 { qparams, .. } => Some(*qparams),
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::I8 { .. } => None,
        }
    }

    pub fn as_i8(&self) -> Option<&[i8]> {
        match &self.data {
            TensorData::I8 { values, .. } => Some(values),
            TensorData::F32(_) => None,
        }
    }

    pub fn into_f32(self) -> Option<Vec<f32>> {
        match self.data {
            TensorData::F32(v) => Some(v),
            TensorData::I8 { .. } => None,
        }
    }

    /// Same data under a new shape with the same element count.
    pub fn reshaped(self, shape: Shape) -> Result<Self, TensorError> {
        check_shape(shape, self.len())?;
        Ok(Self { shape, data: self.data })
    }

    /// Real value of every element, dequantizing int8 data.
    pub fn to_real(&self) -> Vec<f32> {
        match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::I8 { values, qparams } => {
                let zp = i32::from(qparams.zero_point);
                values.iter().map(|&q| qparams.scale * (i32::from(q) - zp) as f32).collect()
            }
        }
    }
}
