//! Flat little-endian weight blob.
//!
//! Parameters appear in first-use order. Float tensors and biases are
//! 4-byte values; int8 tensors carry a 5-byte header (`scale: f32`,
//! `zero_point: i8`) followed by one byte per element; int8-profile biases
//! are `i32`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{Graph, Param};
use crate::tensor::TensorData;

fn ordered_params(graph: &Graph) -> Vec<&Param> {
    let mut seen = BTreeSet::new();
    graph
        .nodes()
        .iter()
        .flat_map(|n| n.weight_refs.iter())
        .filter(|r| seen.insert(r.as_str()))
        .map(|r| graph.param(r))
        .collect()
}

fn param_bytes(p: &Param) -> u64 {
    match p {
        Param::Tensor(t) => match t.data() {
            TensorData::F32(v) => 4 * v.len() as u64,
            TensorData::I8 { values, .. } => 5 + values.len() as u64,
        },
        Param::Bias(b) => 4 * b.len() as u64,
        Param::QBias(b) => 4 * b.len() as u64,
    }
}

/// Size of [`weight_blob`] without building it.
pub fn serialized_weight_bytes(graph: &Graph) -> u64 {
    ordered_params(graph).into_iter().map(param_bytes).sum()
}

pub fn weight_blob(graph: &Graph) -> Vec<u8> {
    let params = ordered_params(graph);
    let mut out = Vec::with_capacity(params.iter().map(|p| param_bytes(p) as usize).sum());
    for p in params {
        match p {
            Param::Tensor(t) => match t.data() {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::I8 { values, qparams } => {
                    out.extend_from_slice(&qparams.scale().to_le_bytes());
                    out.push(qparams.zero_point() as u8);
                    out.extend(values.iter().map(|&v| v as u8));
                }
            },
            Param::Bias(b) => b.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Param::QBias(b) => b.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}
