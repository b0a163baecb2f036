//! Incremental graph construction with shape tracking.
//!
//! Weights are drawn from one SplitMix64 stream in build order: for each
//! weighted node, every filter element in `(kh, kw, cin, cout)` order, then
//! every bias element. The first construction error is kept and reported by
//! [`Builder::finish`], so architecture code can chain calls freely.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::graph::{infer_shape, GraphError, GraphSpec, Op, OperatorNode, Param, INPUT_ID};
use crate::kernels::{Activation, Padding, PoolKind};
use crate::rng::SplitMix64;
use crate::tensor::{DType, Shape, Tensor};

pub struct Builder {
    spec: GraphSpec,
    shapes: BTreeMap<String, Shape>,
    rng: SplitMix64,
    error: Option<GraphError>,
}

impl Builder {
    pub fn new(name: &str, input_shape: Shape, seed: u64) -> Self {
        let mut shapes = BTreeMap::new();
        shapes.insert(INPUT_ID.to_string(), input_shape);
        Self {
            spec: GraphSpec {
                name: name.to_string(),
                input_shape,
                nodes: Vec::new(),
                output_id: String::new(),
                weights: BTreeMap::new(),
                dtype_profile: DType::Float32,
                input_qparams: None,
            },
            shapes,
            rng: SplitMix64::new(seed),
            error: None,
        }
    }

    /// Output shape of a node built so far.
    pub fn shape(&self, id: &str) -> Shape {
        self.shapes.get(id).copied().unwrap_or([1, 1, 1, 1])
    }

    pub fn channels(&self, id: &str) -> usize {
        self.shape(id)[3]
    }

    fn draw(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| self.rng.next_weight()).collect()
    }

    fn push(&mut self, mut node: OperatorNode, weights: Option<(Shape, usize)>) -> String {
        let id = node.id.clone();
        if let Some((shape, bias_len)) = weights {
            let (w, b) = (format!("{id}/weights"), format!("{id}/bias"));
            let values = self.draw(shape.iter().product());
            let bias = self.draw(bias_len);
            // Shapes are checked by validation; a bad shape surfaces there.
            match Tensor::from_f32(shape, values) {
                Ok(t) => {
                    self.spec.weights.insert(w.clone(), Param::Tensor(t));
                }
                Err(e) if self.error.is_none() => {
                    self.error = Some(GraphError::InvalidAttribute { node: id.clone(), detail: e.to_string() });
                }
                Err(_) => {}
            }
            self.spec.weights.insert(b.clone(), Param::Bias(bias));
            node = node.with_weights(&w, &b);
        }
        if self.error.is_none() {
            let ins: Vec<Shape> = node.inputs.iter().map(|i| self.shape(i)).collect();
            match infer_shape(&self.spec, &node, &ins) {
                Ok(s) => {
                    self.shapes.insert(id.clone(), s);
                }
                Err(e) => self.error = Some(e),
            }
        }
        self.spec.nodes.push(node);
        id
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        id: &str,
        input: &str,
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: Padding,
        activation: Activation,
    ) -> String {
        let cin = self.channels(input);
        let op = Op::Conv2d { kernel, filters, stride: (stride, stride), padding, activation };
        self.push(OperatorNode::new(id, op, &[input]), Some(([kernel.0, kernel.1, cin, filters], filters)))
    }

    /// Same-padded convolution followed by relu.
    pub fn conv_relu(&mut self, id: &str, input: &str, filters: usize, k: usize, stride: usize) -> String {
        self.conv(id, input, filters, (k, k), stride, Padding::Same, Activation::Relu)
    }

    pub fn depthwise(&mut self, id: &str, input: &str, k: usize, stride: usize, activation: Activation) -> String {
        let c = self.channels(input);
        let op = Op::DepthwiseConv2d { kernel: (k, k), stride: (stride, stride), padding: Padding::Same, activation };
        self.push(OperatorNode::new(id, op, &[input]), Some(([k, k, c, 1], c)))
    }

    pub fn fully_connected(&mut self, id: &str, input: &str, units: usize, activation: Activation) -> String {
        let [_, h, w, c] = self.shape(input);
        let op = Op::FullyConnected { units, activation };
        self.push(OperatorNode::new(id, op, &[input]), Some(([1, 1, h * w * c, units], units)))
    }

    pub fn pool(
        &mut self,
        id: &str,
        input: &str,
        kind: PoolKind,
        window: usize,
        stride: usize,
        padding: Padding,
    ) -> String {
        let op = Op::Pool { kind, window: (window, window), stride: (stride, stride), padding };
        self.push(OperatorNode::new(id, op, &[input]), None)
    }

    pub fn pool_rect(
        &mut self,
        id: &str,
        input: &str,
        kind: PoolKind,
        window: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> String {
        let op = Op::Pool { kind, window, stride, padding };
        self.push(OperatorNode::new(id, op, &[input]), None)
    }

    /// Average over the whole spatial extent.
    pub fn global_avg_pool(&mut self, id: &str, input: &str) -> String {
        let [_, h, w, _] = self.shape(input);
        let op = Op::Pool { kind: PoolKind::Avg, window: (h, w), stride: (h, w), padding: Padding::Valid };
        self.push(OperatorNode::new(id, op, &[input]), None)
    }

    pub fn resize(&mut self, id: &str, input: &str, size: (usize, usize)) -> String {
        self.push(OperatorNode::new(id, Op::ResizeBilinear { size }, &[input]), None)
    }

    /// Resize `input` to the spatial extent of `like`.
    pub fn resize_like(&mut self, id: &str, input: &str, like: &str) -> String {
        let [_, h, w, _] = self.shape(like);
        self.resize(id, input, (h, w))
    }

    pub fn add(&mut self, id: &str, a: &str, b: &str, activation: Activation) -> String {
        self.push(OperatorNode::new(id, Op::Add { activation }, &[a, b]), None)
    }

    pub fn relu(&mut self, id: &str, input: &str) -> String {
        self.push(OperatorNode::new(id, Op::Relu, &[input]), None)
    }

    pub fn concat(&mut self, id: &str, inputs: &[&str]) -> String {
        self.push(OperatorNode::new(id, Op::Concat, inputs), None)
    }

    pub fn softmax(&mut self, id: &str, input: &str) -> String {
        self.push(OperatorNode::new(id, Op::Softmax, &[input]), None)
    }

    pub fn finish(mut self, output: &str) -> Result<GraphSpec, GraphError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        self.spec.output_id = output.to_string();
        Ok(self.spec)
    }
}
