//! Post-training int8 conversion.
//!
//! The float graph runs once on a calibration image; every node's observed
//! output range becomes its output quantization. Weights are quantized per
//! tensor over their own min/max, and biases are stored as `i32` in units of
//! `input_scale * weight_scale`.

use alloc::vec::Vec;

use crate::graph::{execute_observed, ExecError, Graph, GraphSpec, Op, Param, Source};
use crate::kernels::quant::{quantize, round_half_away};
use crate::kernels::{KernelError, Kernels};
use crate::tensor::{DType, QuantParams, Tensor};

/// Input images live in `[0, 1]`.
pub fn input_qparams() -> QuantParams {
    QuantParams::new(1.0 / 255.0, -128).expect("valid constant")
}

/// Softmax outputs live in `[0, 1)`.
pub fn softmax_qparams() -> QuantParams {
    QuantParams::new(1.0 / 256.0, -128).expect("valid constant")
}

fn range(values: &[f32]) -> (f32, f32) {
    values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("calibration graph must be float32")]
    NotFloat,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Converts a float graph to an int8 graph calibrated on `image`.
pub fn quantize_graph(graph: &Graph, image: &Tensor, kernels: &dyn Kernels) -> Result<GraphSpec, CalibrationError> {
    if graph.dtype() != DType::Float32 {
        return Err(CalibrationError::NotFloat);
    }
    let mut ranges = Vec::with_capacity(graph.nodes().len());
    execute_observed(graph, image, kernels, &mut |_, out| ranges.push(range(out.as_f32().unwrap_or_default())))?;

    let in_qp = input_qparams();
    let out_qps: Vec<QuantParams> = graph
        .nodes()
        .iter()
        .zip(&ranges)
        .map(|(node, &(lo, hi))| match node.op {
            Op::Softmax => softmax_qparams(),
            _ => QuantParams::from_range(lo, hi),
        })
        .collect();

    let mut spec = graph.spec().clone();
    let sources = graph.sources();
    for (i, node) in spec.nodes.iter_mut().enumerate() {
        node.out_qparams = Some(out_qps[i]);
        if !node.op.kind().has_weights() {
            continue;
        }
        let src_scale = match sources[i][0] {
            Source::Input => in_qp.scale(),
            Source::Node(j) => out_qps[j].scale(),
        };
        let (w_name, b_name) = (&node.weight_refs[0], &node.weight_refs[1]);
        let Some(Param::Tensor(w)) = spec.weights.get(w_name) else { continue };
        let (lo, hi) = range(w.as_f32().unwrap_or_default());
        let w_qp = QuantParams::from_range(lo, hi);
        let wq = quantize(w, w_qp)?;
        let bias_scale = f64::from(src_scale) * f64::from(w_qp.scale());
        let bq = match spec.weights.get(b_name) {
            Some(Param::Bias(b)) => b.iter().map(|&v| round_half_away(f64::from(v) / bias_scale)).collect(),
            _ => continue,
        };
        spec.weights.insert(w_name.clone(), Param::Tensor(wq));
        spec.weights.insert(b_name.clone(), Param::QBias(bq));
    }
    spec.dtype_profile = DType::Int8q;
    spec.input_qparams = Some(in_qp);
    Ok(spec)
}
