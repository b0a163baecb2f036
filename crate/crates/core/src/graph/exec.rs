use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::{Graph, Op, Param, Source};
use crate::kernels::quant::{dequantize, quantize};
use crate::kernels::{KernelError, Kernels};
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("input shape {actual:?} does not match graph input {expected:?}")]
    InputShape { expected: [usize; 4], actual: [usize; 4] },
    #[error("input is {actual}, graph expects {expected}")]
    InputDtype { expected: DType, actual: DType },
    #[error("node `{node}`: {source}")]
    Kernel {
        node: String,
        #[source]
        source: KernelError,
    },
}

fn weights<'g>(graph: &'g Graph, refs: &[String]) -> (&'g Tensor, &'g Param) {
    let Param::Tensor(w) = graph.param(&refs[0]) else { unreachable!("validated weight tensor") };
    (w, graph.param(&refs[1]))
}

fn float_bias(p: &Param) -> &[f32] {
    match p {
        Param::Bias(b) => b,
        _ => unreachable!("validated float bias"),
    }
}

fn int_bias(p: &Param) -> &[i32] {
    match p {
        Param::QBias(b) => b,
        _ => unreachable!("validated int8 bias"),
    }
}

/// Runs one float-semantics op.
fn run_float(
    kernels: &dyn Kernels,
    graph: &Graph,
    op: &Op,
    refs: &[String],
    ins: &[&Tensor],
) -> Result<Tensor, KernelError> {
    match *op {
        Op::Conv2d { .. } => {
            let (w, b) = weights(graph, refs);
            kernels.conv2d(ins[0], w, float_bias(b), &op.conv_attrs().expect("conv"))
        }
        Op::DepthwiseConv2d { .. } => {
            let (w, b) = weights(graph, refs);
            kernels.depthwise_conv2d(ins[0], w, float_bias(b), &op.conv_attrs().expect("depthwise"))
        }
        Op::FullyConnected { activation, .. } => {
            let (w, b) = weights(graph, refs);
            kernels.fully_connected(ins[0], w, float_bias(b), activation)
        }
        Op::Pool { .. } => kernels.pool(ins[0], &op.pool_attrs().expect("pool")),
        Op::ResizeBilinear { size } => kernels.resize_bilinear(ins[0], size.0, size.1),
        Op::Add { activation } => kernels.add(ins[0], ins[1], activation),
        Op::Relu => kernels.relu(ins[0]),
        Op::Concat => kernels.concat_channels(ins),
        Op::Softmax => kernels.softmax(ins[0]),
    }
}

fn run_node(kernels: &dyn Kernels, graph: &Graph, index: usize, ins: &[&Tensor]) -> Result<Tensor, KernelError> {
    let node = &graph.nodes()[index];
    if graph.dtype() == DType::Float32 {
        return run_float(kernels, graph, &node.op, &node.weight_refs, ins);
    }
    let out_qp = node.out_qparams.expect("validated int8 node");
    match node.op {
        Op::Conv2d { .. } => {
            let (w, b) = weights(graph, &node.weight_refs);
            kernels.qconv2d(ins[0], w, int_bias(b), &node.op.conv_attrs().expect("conv"), out_qp)
        }
        Op::DepthwiseConv2d { .. } => {
            let (w, b) = weights(graph, &node.weight_refs);
            kernels.qdepthwise_conv2d(ins[0], w, int_bias(b), &node.op.conv_attrs().expect("depthwise"), out_qp)
        }
        Op::FullyConnected { activation, .. } => {
            let (w, b) = weights(graph, &node.weight_refs);
            kernels.qfully_connected(ins[0], w, int_bias(b), activation, out_qp)
        }
        _ => {
            // Ops without an integer kernel run on dequantized values.
            let real: Vec<Tensor> = ins.iter().map(|t| dequantize(t)).collect::<Result<_, _>>()?;
            let refs: Vec<&Tensor> = real.iter().collect();
            quantize(&run_float(kernels, graph, &node.op, &node.weight_refs, &refs)?, out_qp)
        }
    }
}

/// Evaluates the graph in node order, dropping each activation as soon as
/// its last consumer has run.
pub fn execute(graph: &Graph, input: &Tensor, kernels: &dyn Kernels) -> Result<Tensor, ExecError> {
    execute_observed(graph, input, kernels, &mut |_, _| {})
}

/// [`execute`], calling `observe(node_index, output)` after every node.
pub fn execute_observed(
    graph: &Graph,
    input: &Tensor,
    kernels: &dyn Kernels,
    observe: &mut dyn FnMut(usize, &Tensor),
) -> Result<Tensor, ExecError> {
    if input.shape() != graph.input_shape() {
        return Err(ExecError::InputShape { expected: graph.input_shape(), actual: input.shape() });
    }
    if input.dtype() != graph.dtype() {
        return Err(ExecError::InputDtype { expected: graph.dtype(), actual: input.dtype() });
    }
    let sources = graph.sources();
    let last_use = graph.last_use();
    let mut values: Vec<Option<Tensor>> = (0..graph.nodes().len()).map(|_| None).collect();
    let mut graph_input = Some(input);
    for (i, srcs) in sources.iter().enumerate() {
        let out = {
            let ins: Vec<&Tensor> = srcs
                .iter()
                .map(|s| match *s {
                    Source::Input => graph_input.expect("input still live"),
                    Source::Node(j) => values[j].as_ref().expect("operand still live"),
                })
                .collect();
            run_node(kernels, graph, i, &ins)
                .map_err(|source| ExecError::Kernel { node: graph.nodes()[i].id.clone(), source })?
        };
        observe(i, &out);
        values[i] = Some(out);
        for s in srcs {
            match *s {
                Source::Input if graph.input_last_use() == i => graph_input = None,
                Source::Node(j) if last_use[j] == Some(i) => values[j] = None,
                _ => {}
            }
        }
    }
    Ok(values[graph.output_index()].take().expect("output computed"))
}
