//! Dataflow graph of typed operators.
//!
//! A [`GraphSpec`] is an ordered node list plus a named weight store. Nodes
//! may only consume the graph input or nodes listed before them, so the list
//! order is a topological order. [`validate`] checks that contract, resolves
//! weights and propagates shapes, producing an immutable [`Graph`].

mod analysis;
mod exec;
mod serialize;

pub use analysis::{count_macs, count_params, layer_table, peak_activation_bytes, LayerRow};
pub use exec::{execute, execute_observed, ExecError};
pub use serialize::{serialized_weight_bytes, weight_blob};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{output_extent, Activation, ConvAttrs, Padding, PoolAttrs, PoolKind};
use crate::tensor::{DType, QuantParams, Shape, Tensor};

/// Reserved id naming the graph input.
pub const INPUT_ID: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Conv2d,
    DepthwiseConv2d,
    FullyConnected,
    Pool,
    ResizeBilinear,
    Add,
    Relu,
    Concat,
    Softmax,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::Conv2d,
        OpKind::DepthwiseConv2d,
        OpKind::FullyConnected,
        OpKind::Pool,
        OpKind::ResizeBilinear,
        OpKind::Add,
        OpKind::Relu,
        OpKind::Concat,
        OpKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv2d => "conv2d",
            OpKind::DepthwiseConv2d => "depthwise_conv2d",
            OpKind::FullyConnected => "fully_connected",
            OpKind::Pool => "pool",
            OpKind::ResizeBilinear => "resize_bilinear",
            OpKind::Add => "add",
            OpKind::Relu => "relu",
            OpKind::Concat => "concat",
            OpKind::Softmax => "softmax",
        }
    }

    /// Ops with trainable weights and a bias.
    pub fn has_weights(self) -> bool {
        matches!(self, OpKind::Conv2d | OpKind::DepthwiseConv2d | OpKind::FullyConnected)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An operator together with its attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Conv2d {
        kernel: (usize, usize),
        filters: usize,
        stride: (usize, usize),
        padding: Padding,
        #[serde(default)]
        activation: Activation,
    },
    DepthwiseConv2d {
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        #[serde(default)]
        activation: Activation,
    },
    FullyConnected {
        units: usize,
        #[serde(default)]
        activation: Activation,
    },
    Pool {
        kind: PoolKind,
        window: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    },
    ResizeBilinear {
        size: (usize, usize),
    },
    Add {
        #[serde(default)]
        activation: Activation,
    },
    Relu,
    Concat,
    Softmax,
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::DepthwiseConv2d { .. } => OpKind::DepthwiseConv2d,
            Op::FullyConnected { .. } => OpKind::FullyConnected,
            Op::Pool { .. } => OpKind::Pool,
            Op::ResizeBilinear { .. } => OpKind::ResizeBilinear,
            Op::Add { .. } => OpKind::Add,
            Op::Relu => OpKind::Relu,
            Op::Concat => OpKind::Concat,
            Op::Softmax => OpKind::Softmax,
        }
    }

    pub(crate) fn conv_attrs(&self) -> Option<ConvAttrs> {
        match *self {
            Op::Conv2d { stride, padding, activation, .. }
            | Op::DepthwiseConv2d { stride, padding, activation, .. } => {
                Some(ConvAttrs { stride, padding, activation })
            }
            _ => None,
        }
    }

    pub(crate) fn pool_attrs(&self) -> Option<PoolAttrs> {
        match *self {
            Op::Pool { kind, window, stride, padding } => Some(PoolAttrs { kind, window, stride, padding }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorNode {
    pub id: String,
    #[serde(flatten)]
    pub op: Op,
    pub inputs: Vec<String>,
    /// Weight and bias names for ops that carry them, in that order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight_refs: Vec<String>,
    /// Output quantization for int8 graphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_qparams: Option<QuantParams>,
}

impl OperatorNode {
    pub fn new(id: impl Into<String>, op: Op, inputs: &[&str]) -> Self {
        Self {
            id: id.into(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            weight_refs: Vec::new(),
            out_qparams: None,
        }
    }

    pub fn with_weights(mut self, weights: &str, bias: &str) -> Self {
        self.weight_refs = vec![weights.to_string(), bias.to_string()];
        self
    }
}

/// Entry of the weight store.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Tensor(Tensor),
    Bias(Vec<f32>),
    /// Int32 bias in units of `input_scale * weight_scale`.
    QBias(Vec<i32>),
}

impl Param {
    pub fn len(&self) -> usize {
        match self {
            Param::Tensor(t) => t.len(),
            Param::Bias(b) => b.len(),
            Param::QBias(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub name: String,
    pub input_shape: Shape,
    pub nodes: Vec<OperatorNode>,
    pub output_id: String,
    pub weights: BTreeMap<String, Param>,
    pub dtype_profile: DType,
    /// Quantization of the graph input for int8 graphs.
    pub input_qparams: Option<QuantParams>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node `{node}`: input `{input}` does not exist")]
    DanglingInput { node: String, input: String },
    #[error("node `{node}`: input `{input}` is defined later in the graph, which would form a cycle")]
    Cycle { node: String, input: String },
    #[error("node `{node}`: weight `{weight}` is missing from the weight store")]
    MissingWeight { node: String, weight: String },
    #[error("node `{node}`: shape mismatch: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("node `{node}` does not contribute to the graph output")]
    UnusedNode { node: String },
    #[error("node id `{node}` is used more than once")]
    DuplicateId { node: String },
    #[error("node `{node}`: invalid attribute: {detail}")]
    InvalidAttribute { node: String, detail: String },
    #[error("node `{node}`: {detail}")]
    DtypeMismatch { node: String, detail: String },
    #[error("graph output `{output}` is not a node")]
    UnknownOutput { output: String },
}

/// A validated graph annotated with per-node shapes and buffer lifetimes.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    spec: GraphSpec,
    shapes: Vec<Shape>,
    /// Index of the last node reading each node's output; `None` for the
    /// graph output, which outlives execution.
    last_use: Vec<Option<usize>>,
    input_last_use: usize,
    output_index: usize,
}

impl Graph {
    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn nodes(&self) -> &[OperatorNode] {
        &self.spec.nodes
    }

    pub fn input_shape(&self) -> Shape {
        self.spec.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.shapes[self.output_index]
    }

    /// Output shape of every node, in node order.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn dtype(&self) -> DType {
        self.spec.dtype_profile
    }

    pub fn into_spec(self) -> GraphSpec {
        self.spec
    }

    pub(crate) fn output_index(&self) -> usize {
        self.output_index
    }

    pub(crate) fn last_use(&self) -> &[Option<usize>] {
        &self.last_use
    }

    pub(crate) fn input_last_use(&self) -> usize {
        self.input_last_use
    }

    pub(crate) fn param(&self, name: &str) -> &Param {
        &self.spec.weights[name]
    }
}

/// Where a node input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Source {
    Input,
    Node(usize),
}

fn shape_err(node: &str, detail: String) -> GraphError {
    GraphError::ShapeMismatch { node: node.to_string(), detail }
}

fn attr_err(node: &str, detail: impl Into<String>) -> GraphError {
    GraphError::InvalidAttribute { node: node.to_string(), detail: detail.into() }
}

fn weight_shape(spec: &GraphSpec, node: &OperatorNode) -> Result<Option<(Shape, usize)>, GraphError> {
    if !node.op.kind().has_weights() {
        if !node.weight_refs.is_empty() {
            return Err(attr_err(&node.id, alloc::format!("{} takes no weights", node.op.kind())));
        }
        return Ok(None);
    }
    if node.weight_refs.len() != 2 {
        return Err(attr_err(&node.id, "expected a weight and a bias reference"));
    }
    let lookup = |name: &String| {
        spec.weights.get(name).ok_or_else(|| GraphError::MissingWeight { node: node.id.clone(), weight: name.clone() })
    };
    let (w, b) = (lookup(&node.weight_refs[0])?, lookup(&node.weight_refs[1])?);
    let Param::Tensor(w) = w else {
        return Err(GraphError::DtypeMismatch {
            node: node.id.clone(),
            detail: alloc::format!("`{}` must be a weight tensor", node.weight_refs[0]),
        });
    };
    let dtype_ok = match spec.dtype_profile {
        DType::Float32 => w.dtype() == DType::Float32 && matches!(b, Param::Bias(_)),
        DType::Int8q => w.dtype() == DType::Int8q && matches!(b, Param::QBias(_)),
    };
    if !dtype_ok {
        return Err(GraphError::DtypeMismatch {
            node: node.id.clone(),
            detail: alloc::format!("weights do not match the {} profile", spec.dtype_profile),
        });
    }
    Ok(Some((w.shape(), b.len())))
}

/// Output shape of `node` given its input shapes.
pub(crate) fn infer_shape(spec: &GraphSpec, node: &OperatorNode, inputs: &[Shape]) -> Result<Shape, GraphError> {
    let id = node.id.as_str();
    let arity_ok = match node.op {
        Op::Add { .. } => inputs.len() == 2,
        Op::Concat => !inputs.is_empty(),
        _ => inputs.len() == 1,
    };
    if !arity_ok {
        return Err(attr_err(id, alloc::format!("{} cannot take {} inputs", node.op.kind(), inputs.len())));
    }
    let weights = weight_shape(spec, node)?;
    let [n, h, w, c] = inputs[0];
    let op_name = node.op.kind().name();
    let extent =
        |input, k, s, p: Padding| output_extent(op_name, input, k, s, p).map_err(|e| shape_err(id, e.to_string()));
    match node.op {
        Op::Conv2d { kernel, filters, stride, padding, .. } => {
            let (ws, bias_len) = weights.expect("conv carries weights");
            let expected = [kernel.0, kernel.1, c, filters];
            if ws != expected {
                return Err(shape_err(id, alloc::format!("weights {ws:?}, expected {expected:?}")));
            }
            if bias_len != filters {
                return Err(shape_err(id, alloc::format!("bias length {bias_len}, expected {filters}")));
            }
            let (oh, _) = extent(h, kernel.0, stride.0, padding)?;
            let (ow, _) = extent(w, kernel.1, stride.1, padding)?;
            Ok([n, oh, ow, filters])
        }
        Op::DepthwiseConv2d { kernel, stride, padding, .. } => {
            let (ws, bias_len) = weights.expect("depthwise carries weights");
            let expected = [kernel.0, kernel.1, c, 1];
            if ws != expected || bias_len != c {
                return Err(shape_err(id, alloc::format!("weights {ws:?} and bias {bias_len} for {c} channels")));
            }
            let (oh, _) = extent(h, kernel.0, stride.0, padding)?;
            let (ow, _) = extent(w, kernel.1, stride.1, padding)?;
            Ok([n, oh, ow, c])
        }
        Op::FullyConnected { units, .. } => {
            let (ws, bias_len) = weights.expect("fully connected carries weights");
            let expected = [1, 1, h * w * c, units];
            if ws != expected || bias_len != units {
                return Err(shape_err(id, alloc::format!("weights {ws:?}, expected {expected:?}")));
            }
            Ok([n, 1, 1, units])
        }
        Op::Pool { window, stride, padding, .. } => {
            let (oh, _) = extent(h, window.0, stride.0, padding)?;
            let (ow, _) = extent(w, window.1, stride.1, padding)?;
            Ok([n, oh, ow, c])
        }
        Op::ResizeBilinear { size } => {
            if size.0 == 0 || size.1 == 0 {
                return Err(attr_err(id, "resize target must be positive"));
            }
            Ok([n, size.0, size.1, c])
        }
        Op::Add { .. } => {
            if inputs[0] != inputs[1] {
                return Err(shape_err(id, alloc::format!("operands {:?} and {:?}", inputs[0], inputs[1])));
            }
            Ok(inputs[0])
        }
        Op::Concat => {
            let mut channels = 0;
            for s in inputs {
                if s[..3] != inputs[0][..3] {
                    return Err(shape_err(id, alloc::format!("operands {:?} and {s:?}", inputs[0])));
                }
                channels += s[3];
            }
            Ok([n, h, w, channels])
        }
        Op::Relu | Op::Softmax => Ok(inputs[0]),
    }
}

/// Resolves node inputs to sources, checking ids and ordering.
pub(crate) fn resolve_sources(spec: &GraphSpec) -> Result<Vec<Vec<Source>>, GraphError> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, node) in spec.nodes.iter().enumerate() {
        if node.id == INPUT_ID || index.insert(node.id.as_str(), i).is_some() {
            return Err(GraphError::DuplicateId { node: node.id.clone() });
        }
    }
    spec.nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            node.inputs
                .iter()
                .map(|name| match index.get(name.as_str()) {
                    _ if name == INPUT_ID => Ok(Source::Input),
                    Some(&j) if j < i => Ok(Source::Node(j)),
                    Some(_) => Err(GraphError::Cycle { node: node.id.clone(), input: name.clone() }),
                    None => Err(GraphError::DanglingInput { node: node.id.clone(), input: name.clone() }),
                })
                .collect()
        })
        .collect()
}

/// Propagates shapes from `input_shape` through every node.
pub(crate) fn propagate(
    spec: &GraphSpec,
    sources: &[Vec<Source>],
    input_shape: Shape,
) -> Result<Vec<Shape>, GraphError> {
    let mut shapes: Vec<Shape> = Vec::with_capacity(spec.nodes.len());
    for (node, srcs) in spec.nodes.iter().zip(sources) {
        let ins: Vec<Shape> = srcs
            .iter()
            .map(|s| match *s {
                Source::Input => input_shape,
                Source::Node(j) => shapes[j],
            })
            .collect();
        shapes.push(infer_shape(spec, node, &ins)?);
    }
    Ok(shapes)
}

pub fn validate(spec: GraphSpec) -> Result<Graph, GraphError> {
    if spec.input_shape.contains(&0) {
        return Err(shape_err(INPUT_ID, alloc::format!("input shape {:?} has a zero extent", spec.input_shape)));
    }
    let sources = resolve_sources(&spec)?;
    let output_index = spec
        .nodes
        .iter()
        .position(|n| n.id == spec.output_id)
        .ok_or_else(|| GraphError::UnknownOutput { output: spec.output_id.clone() })?;
    if spec.dtype_profile == DType::Int8q {
        if spec.input_qparams.is_none() {
            return Err(GraphError::DtypeMismatch {
                node: INPUT_ID.to_string(),
                detail: "int8 input needs qparams".into(),
            });
        }
        if let Some(node) = spec.nodes.iter().find(|n| n.out_qparams.is_none()) {
            return Err(GraphError::DtypeMismatch {
                node: node.id.clone(),
                detail: "int8 node needs output qparams".into(),
            });
        }
    }
    let shapes = propagate(&spec, &sources, spec.input_shape)?;

    // Walk back from the output; anything not reached is dead weight.
    let mut live = vec![false; spec.nodes.len()];
    live[output_index] = true;
    for i in (0..=output_index).rev() {
        if live[i] {
            for s in &sources[i] {
                if let Source::Node(j) = *s {
                    live[j] = true;
                }
            }
        }
    }
    if let Some(i) = live.iter().position(|&l| !l) {
        return Err(GraphError::UnusedNode { node: spec.nodes[i].id.clone() });
    }

    let mut last_use = vec![None; spec.nodes.len()];
    let mut input_last_use = 0;
    for (i, srcs) in sources.iter().enumerate() {
        for s in srcs {
            match *s {
                Source::Input => input_last_use = i,
                Source::Node(j) => last_use[j] = Some(i),
            }
        }
    }
    last_use[output_index] = None;
    Ok(Graph { spec, shapes, last_use, input_last_use, output_index })
}

impl Graph {
    pub(crate) fn sources(&self) -> Vec<Vec<Source>> {
        resolve_sources(&self.spec).expect("validated graph")
    }

    /// The same graph validated for another input shape.
    pub fn with_input_shape(&self, shape: Shape) -> Result<Graph, GraphError> {
        let mut spec = self.spec.clone();
        spec.input_shape = shape;
        validate(spec)
    }
}
