//! Static cost analyzers.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::{propagate, Graph, GraphError, Op, OpKind, Source};
use crate::tensor::Shape;

/// One row of a per-layer cost table.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LayerRow {
    pub id: String,
    pub kind: OpKind,
    pub output_shape: Shape,
    pub params: u64,
    pub macs: u64,
}

fn volume(s: Shape) -> u64 {
    s.iter().map(|&d| d as u64).product()
}

/// Multiply-accumulates of one node; zero for ops without weights.
fn node_macs(op: &Op, input: Shape, output: Shape) -> u64 {
    let [n, oh, ow, oc] = output.map(|d| d as u64);
    match *op {
        Op::Conv2d { kernel, .. } => n * oh * ow * kernel.0 as u64 * kernel.1 as u64 * input[3] as u64 * oc,
        Op::DepthwiseConv2d { kernel, .. } => n * oh * ow * kernel.0 as u64 * kernel.1 as u64 * oc,
        Op::FullyConnected { units, .. } => n * (volume(input) / n) * units as u64,
        _ => 0,
    }
}

fn node_params(graph: &Graph, refs: &[String]) -> u64 {
    refs.iter().map(|r| graph.param(r).len() as u64).sum()
}

/// Number of weight and bias elements referenced by the graph, each stored
/// parameter counted once.
pub fn count_params(graph: &Graph) -> u64 {
    let refs: BTreeSet<&String> = graph.nodes().iter().flat_map(|n| n.weight_refs.iter()).collect();
    refs.into_iter().map(|r| graph.param(r).len() as u64).sum()
}

fn shapes_for(graph: &Graph, input_shape: Shape) -> Result<Vec<Shape>, GraphError> {
    if input_shape == graph.input_shape() {
        return Ok(graph.shapes().to_vec());
    }
    propagate(graph.spec(), &graph.sources(), input_shape)
}

fn input_of(sources: &[Source], shapes: &[Shape], input_shape: Shape) -> Shape {
    match sources.first() {
        Some(Source::Node(j)) => shapes[*j],
        _ => input_shape,
    }
}

/// Total multiply-accumulates for one forward pass at `input_shape`.
pub fn count_macs(graph: &Graph, input_shape: Shape) -> Result<u64, GraphError> {
    Ok(layer_rows(graph, input_shape)?.iter().map(|r| r.macs).sum())
}

/// Per-node shapes, parameters and MACs at the graph's own input shape.
pub fn layer_table(graph: &Graph) -> Vec<LayerRow> {
    layer_rows(graph, graph.input_shape()).expect("validated graph")
}

fn layer_rows(graph: &Graph, input_shape: Shape) -> Result<Vec<LayerRow>, GraphError> {
    let shapes = shapes_for(graph, input_shape)?;
    let sources = graph.sources();
    Ok(graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| LayerRow {
            id: node.id.clone(),
            kind: node.op.kind(),
            output_shape: shapes[i],
            params: node_params(graph, &node.weight_refs),
            macs: node_macs(&node.op, input_of(&sources[i], &shapes, input_shape), shapes[i]),
        })
        .collect())
}

/// Largest number of activation bytes simultaneously live when the graph
/// runs in node order and every buffer is released right after its last
/// consumer. Weights are not included.
pub fn peak_activation_bytes(graph: &Graph, input_shape: Shape) -> Result<u64, GraphError> {
    let shapes = shapes_for(graph, input_shape)?;
    let width = graph.dtype().width() as u64;
    let sources = graph.sources();
    let last_use = graph.last_use();
    let mut live = volume(input_shape) * width;
    let mut input_live = true;
    let mut peak = live;
    for (i, srcs) in sources.iter().enumerate() {
        live += volume(shapes[i]) * width;
        peak = peak.max(live);
        let mut released = BTreeSet::new();
        for s in srcs {
            match *s {
                Source::Input if input_live && graph.input_last_use() == i => {
                    input_live = false;
                    live -= volume(input_shape) * width;
                }
                Source::Node(j) if last_use[j] == Some(i) && released.insert(j) => live -= volume(shapes[j]) * width,
                _ => {}
            }
        }
    }
    Ok(peak)
}
