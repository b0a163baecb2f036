//! Backend registry and whole-graph dispatch.
//!
//! A backend declares the `(op, dtype)` pairs it implements. A graph runs on
//! the preferred backend only if every node is covered; otherwise the whole
//! graph falls back to the reference backend, which covers everything.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{execute, ExecError, Graph, OpKind};
use crate::kernels::optimized::{OptimizedKernels, Parallel};
use crate::kernels::quantized::QuantizedKernels;
use crate::kernels::Kernels;
use crate::tensor::{DType, TensorData};

pub const REFERENCE: &str = "reference";
pub const OPTIMIZED: &str = "optimized";
pub const QUANTIZED: &str = "quantized";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendCapability {
    pub backend_id: String,
    pub supported_ops: BTreeSet<(OpKind, DType)>,
    pub description: String,
}

impl BackendCapability {
    pub fn new(
        backend_id: impl Into<String>,
        description: impl Into<String>,
        ops: impl IntoIterator<Item = (OpKind, DType)>,
    ) -> Self {
        Self {
            backend_id: backend_id.into(),
            supported_ops: ops.into_iter().collect(),
            description: description.into(),
        }
    }

    /// Every op in both dtypes.
    pub fn total(backend_id: impl Into<String>, description: impl Into<String>) -> Self {
        let ops = OpKind::ALL.iter().flat_map(|&k| [(k, DType::Float32), (k, DType::Int8q)]);
        Self::new(backend_id, description, ops)
    }

    pub fn supports(&self, kind: OpKind, dtype: DType) -> bool {
        self.supported_ops.contains(&(kind, dtype))
    }

    pub fn is_total(&self) -> bool {
        OpKind::ALL.iter().all(|&k| self.supports(k, DType::Float32) && self.supports(k, DType::Int8q))
    }

    /// First node the backend cannot run.
    pub fn first_unsupported<'g>(&self, graph: &'g Graph) -> Option<(&'g str, OpKind)> {
        let dtype = graph.dtype();
        graph.nodes().iter().find(|n| !self.supports(n.op.kind(), dtype)).map(|n| (n.id.as_str(), n.op.kind()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispatchReason {
    AllOpsSupported,
    FallbackUnsupportedOp { node_id: String, op_kind: OpKind },
    ForcedByFlag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub chosen_backend_id: String,
    pub reason: DispatchReason,
}

impl DispatchDecision {
    pub fn forced_reference() -> Self {
        Self { chosen_backend_id: REFERENCE.to_string(), reason: DispatchReason::ForcedByFlag }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend `{0}` is already registered")]
    DuplicateId(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("the reference backend must support every op in both dtypes")]
    ReferenceNotTotal,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("outputs differ in shape: {a:?} vs {b:?}")]
    OutputShape { a: [usize; 4], b: [usize; 4] },
}

struct Entry {
    capability: BackendCapability,
    kernels: Box<dyn Kernels>,
}

/// Registered backends, in registration order.
#[derive(Default)]
pub struct Registry {
    entries: Vec<Entry>,
}

impl core::fmt::Debug for Registry {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_list().entries(self.entries.iter().map(|e| &e.capability.backend_id)).finish()
    }
}

/// Kernel set that only uses the trait's reference defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceKernels;

impl Kernels for ReferenceKernels {}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The three built-in backends, with `parallel` driving the blocked ones.
    pub fn with_builtins<P: Parallel + Clone + 'static>(parallel: P) -> Self {
        let mut r = Self::new();
        r.register(BackendCapability::total(REFERENCE, "naive nested loops, every op"), Box::new(ReferenceKernels))
            .expect("fresh registry");
        r.register(
            BackendCapability::new(
                OPTIMIZED,
                "cache-blocked float kernels",
                OpKind::ALL.iter().map(|&k| (k, DType::Float32)),
            ),
            Box::new(OptimizedKernels::new(parallel.clone())),
        )
        .expect("fresh registry");
        let int8_ops = [OpKind::Conv2d, OpKind::DepthwiseConv2d, OpKind::FullyConnected, OpKind::Pool, OpKind::Softmax];
        r.register(
            BackendCapability::new(QUANTIZED, "blocked int8 kernels", int8_ops.map(|k| (k, DType::Int8q))),
            Box::new(QuantizedKernels::new(parallel)),
        )
        .expect("fresh registry");
        r
    }

    pub fn register(&mut self, capability: BackendCapability, kernels: Box<dyn Kernels>) -> Result<(), BackendError> {
        if self.capability(&capability.backend_id).is_some() {
            return Err(BackendError::DuplicateId(capability.backend_id));
        }
        if capability.backend_id == REFERENCE && !capability.is_total() {
            return Err(BackendError::ReferenceNotTotal);
        }
        self.entries.push(Entry { capability, kernels });
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.capability.backend_id.as_str())
    }

    pub fn capability(&self, id: &str) -> Option<&BackendCapability> {
        self.entries.iter().find(|e| e.capability.backend_id == id).map(|e| &e.capability)
    }

    pub fn kernels(&self, id: &str) -> Result<&dyn Kernels, BackendError> {
        self.entries
            .iter()
            .find(|e| e.capability.backend_id == id)
            .map(|e| e.kernels.as_ref())
            .ok_or_else(|| BackendError::UnknownBackend(id.to_string()))
    }

    /// Whole-graph dispatch: the preferred backend if it covers every node,
    /// otherwise the reference backend with the first uncovered node.
    pub fn select_backend(&self, graph: &Graph, preferred: &str) -> Result<DispatchDecision, BackendError> {
        let cap = self.capability(preferred).ok_or_else(|| BackendError::UnknownBackend(preferred.to_string()))?;
        if self.capability(REFERENCE).is_none() {
            return Err(BackendError::UnknownBackend(REFERENCE.to_string()));
        }
        Ok(match cap.first_unsupported(graph) {
            None => {
                DispatchDecision { chosen_backend_id: preferred.to_string(), reason: DispatchReason::AllOpsSupported }
            }
            Some((node, kind)) => DispatchDecision {
                chosen_backend_id: REFERENCE.to_string(),
                reason: DispatchReason::FallbackUnsupportedOp { node_id: node.to_string(), op_kind: kind },
            },
        })
    }
}

/// Largest element-wise disagreement between two backends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    /// `max |a - b|` over real values.
    pub max_abs: f64,
    /// `max |a|`, the scale the deviation is judged against.
    pub reference_peak: f64,
    /// Largest code distance when both outputs are int8.
    pub quanta: Option<u32>,
}

impl Deviation {
    pub fn relative(&self) -> f64 {
        if self.reference_peak > 0.0 {
            self.max_abs / self.reference_peak
        } else {
            self.max_abs
        }
    }
}

/// Runs `graph` on `input` under both kernel sets and compares the outputs;
/// `a` is treated as the reference.
pub fn equivalence_check(
    graph: &Graph,
    input: &crate::tensor::Tensor,
    a: &dyn Kernels,
    b: &dyn Kernels,
) -> Result<Deviation, BackendError> {
    let (ya, yb) = (execute(graph, input, a)?, execute(graph, input, b)?);
    if ya.shape() != yb.shape() {
        return Err(BackendError::OutputShape { a: ya.shape(), b: yb.shape() });
    }
    let quanta = match (ya.data(), yb.data()) {
        (TensorData::I8 { values: qa, .. }, TensorData::I8 { values: qb, .. }) => {
            Some(qa.iter().zip(qb).map(|(&x, &y)| (i32::from(x) - i32::from(y)).unsigned_abs()).max().unwrap_or(0))
        }
        _ => None,
    };
    let (ra, rb) = (ya.to_real(), yb.to_real());
    let mut max_abs = 0.0f64;
    let mut peak = 0.0f64;
    for (&x, &y) in ra.iter().zip(&rb) {
        let d = (f64::from(x) - f64::from(y)).abs();
        // NaN anywhere is reported as an infinite deviation.
        max_abs = if d.is_nan() { f64::INFINITY } else { max_abs.max(d) };
        peak = peak.max(f64::from(x).abs());
    }
    Ok(Deviation { max_abs, reference_peak: peak, quanta })
}
