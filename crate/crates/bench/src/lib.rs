//! Operating-system side of the benchmark: wall clock, kernel thread pool,
//! result and profile files, ranking export and the `infer-bench` command
//! line. Everything else lives in [`inferbench_core`].

pub mod cli;
pub mod clock;
pub mod export;
pub mod files;
pub mod host;
pub mod parallel;
pub mod results;

pub use inferbench_core as core;
