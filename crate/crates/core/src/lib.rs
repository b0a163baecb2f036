//! Core of a CNN inference benchmark.
//!
//! Holds everything that does not need an operating system: tensors and
//! operator kernels, the graph IR and its static analyzers, backend
//! dispatch, the canonical workloads, the timing protocol (against an
//! injected clock), scoring and leaderboard aggregation. File formats,
//! threads and the command line live in the `inferbench` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod aggregate;
pub mod backend;
pub mod graph;
pub mod kernels;
pub mod rng;
pub mod runner;
pub mod scoring;
pub mod tensor;
pub mod zoo;

pub use tensor::{DType, QuantParams, Shape, Tensor, TensorError};
