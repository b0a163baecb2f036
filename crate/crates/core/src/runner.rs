//! Timing protocol, memory probe and suite orchestration.
//!
//! Images run one after another on fresh seeded inputs. A new image starts
//! only while the accumulated image time is below the budget; the image in
//! flight when the budget runs out finishes and counts. A test passes when
//! its first image finishes within the budget. The reported average skips
//! the first two images whenever more than two were processed.
//!
//! Time comes from an injected [`Clock`], so the protocol runs unchanged
//! against scripted costs in tests and a monotonic clock in production.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{DispatchDecision, Registry, OPTIMIZED, QUANTIZED, REFERENCE};
use crate::graph::{count_macs, execute, peak_activation_bytes, Graph};
use crate::kernels::Kernels;
use crate::rng::derive_seed;
use crate::tensor::DType;
use crate::zoo::{self, WorkloadSpec, ZooError, MEMORY_PROBE_TEST};

/// Backend preference that picks the quantized backend for int8 graphs and
/// the optimized one otherwise.
pub const AUTO: &str = "auto";

/// Safety stop for clocks that fail to advance.
pub const MAX_IMAGES: usize = 1_000_000;

pub trait Clock {
    /// Milliseconds on a monotonic timeline.
    fn now_ms(&mut self) -> f64;

    /// Called once an image's work is done. Simulated clocks advance here.
    fn after_image(&mut self, _work_macs: u64) {}
}

/// Clock whose i-th image costs `costs[i]` ms; the last cost repeats.
#[derive(Debug, Clone)]
pub struct ScriptedClock {
    now: f64,
    costs: Vec<f64>,
    next: usize,
}

impl ScriptedClock {
    pub fn new(costs: Vec<f64>) -> Result<Self, RunError> {
        if costs.is_empty() || costs.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(RunError::Config("scripted costs must be positive and non-empty".to_string()));
        }
        Ok(Self { now: 0.0, costs, next: 0 })
    }
}

impl Clock for ScriptedClock {
    fn now_ms(&mut self) -> f64 {
        self.now
    }

    fn after_image(&mut self, _work_macs: u64) {
        self.now += self.costs[self.next.min(self.costs.len() - 1)];
        self.next += 1;
    }
}

/// Clock charging a fixed time per multiply-accumulate.
#[derive(Debug, Clone)]
pub struct MacRateClock {
    now: f64,
    ms_per_gmac: f64,
}

impl MacRateClock {
    pub fn new(ms_per_gmac: f64) -> Self {
        Self { now: 0.0, ms_per_gmac }
    }
}

impl Clock for MacRateClock {
    fn now_ms(&mut self) -> f64 {
        self.now
    }

    fn after_image(&mut self, work_macs: u64) {
        // Keep every image strictly positive so the loop always terminates.
        self.now += (work_macs as f64 * 1e-9 * self.ms_per_gmac).max(1e-6);
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Outcome of one test under the timing protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub test_id: u8,
    pub backend_id: String,
    pub dispatch: Option<DispatchDecision>,
    pub images_processed: usize,
    pub per_image_ms: Vec<f64>,
    pub avg_ms: f64,
    pub passed: bool,
    pub budget_s: f64,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Measurement {
    fn failed(test_id: u8, backend_id: &str, budget_s: f64, note: String) -> Self {
        Self {
            test_id,
            backend_id: backend_id.to_string(),
            dispatch: None,
            images_processed: 0,
            per_image_ms: Vec::new(),
            avg_ms: 0.0,
            passed: false,
            budget_s,
            notes: alloc::vec![note],
        }
    }
}

/// Reported average: the first two images are warm-up when there are more.
pub fn protocol_average(per_image_ms: &[f64]) -> f64 {
    let kept = if per_image_ms.len() > 2 { &per_image_ms[2..] } else { per_image_ms };
    if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

pub fn protocol_passed(per_image_ms: &[f64], budget_ms: f64) -> bool {
    per_image_ms.first().is_some_and(|&t| t <= budget_ms)
}

/// Runs images until the budget is spent. `prepare` builds the i-th input
/// outside the timed span; `run` processes it. Returns the per-image times
/// and the error that stopped the loop early, if any.
pub fn time_images<T, E>(
    budget_ms: f64,
    work_macs: u64,
    clock: &mut dyn Clock,
    mut prepare: impl FnMut(usize) -> T,
    mut run: impl FnMut(T) -> Result<(), E>,
) -> (Vec<f64>, Option<E>) {
    let mut times = Vec::new();
    let mut elapsed = 0.0;
    while elapsed < budget_ms && times.len() < MAX_IMAGES {
        let input = prepare(times.len());
        let start = clock.now_ms();
        let outcome = run(input);
        clock.after_image(work_macs);
        let dt = clock.now_ms() - start;
        if let Err(e) = outcome {
            return (times, Some(e));
        }
        times.push(dt);
        elapsed += dt;
    }
    (times, None)
}

/// Backend a test should prefer given the user's choice.
pub fn resolve_preference<'a>(preferred: &'a str, graph: &Graph) -> &'a str {
    match (preferred, graph.dtype()) {
        (AUTO, DType::Int8q) => QUANTIZED,
        (AUTO, DType::Float32) => OPTIMIZED,
        (p, _) => p,
    }
}

/// Dispatch for one workload: tests outside the accelerated group always run
/// on the CPU reference path.
pub fn dispatch(
    registry: &Registry,
    spec: &WorkloadSpec,
    graph: &Graph,
    preferred: &str,
) -> Result<DispatchDecision, crate::backend::BackendError> {
    let preferred = resolve_preference(preferred, graph);
    if !spec.accelerator_eligible {
        registry.kernels(preferred)?;
        return Ok(DispatchDecision::forced_reference());
    }
    registry.select_backend(graph, preferred)
}

/// Seed of the i-th timed image.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        seed
    } else {
        derive_seed(seed ^ index as u64, "image")
    }
}

pub fn run_test(
    graph: &Graph,
    spec: &WorkloadSpec,
    registry: &Registry,
    preferred: &str,
    budget_s: f64,
    clock: &mut dyn Clock,
) -> Measurement {
    let decision = match dispatch(registry, spec, graph, preferred) {
        Ok(d) => d,
        Err(e) => return Measurement::failed(spec.test_id, preferred, budget_s, e.to_string()),
    };
    let backend_id = decision.chosen_backend_id.clone();
    if !(budget_s.is_finite() && budget_s > 0.0) {
        return Measurement::failed(
            spec.test_id,
            &backend_id,
            budget_s,
            format!("budget {budget_s} s is not positive"),
        );
    }
    let kernels = match registry.kernels(&backend_id) {
        Ok(k) => k,
        Err(e) => return Measurement::failed(spec.test_id, &backend_id, budget_s, e.to_string()),
    };
    let work = count_macs(graph, graph.input_shape()).unwrap_or(0);
    let budget_ms = budget_s * 1000.0;
    let (times, error) = time_images(
        budget_ms,
        work,
        clock,
        |i| zoo::model_input(graph, &zoo::generate_input(spec, image_seed(spec.seed, i))),
        |input| match input {
            Ok(x) => execute(graph, &x, kernels).map(drop).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        },
    );
    let mut notes = Vec::new();
    if let crate::backend::DispatchReason::FallbackUnsupportedOp { node_id, op_kind } = &decision.reason {
        notes.push(format!("fell back to {REFERENCE}: node `{node_id}` ({op_kind}) unsupported"));
    }
    if let Some(e) = error {
        notes.push(format!("image {} failed: {e}", times.len()));
    }
    let passed = protocol_passed(&times, budget_ms);
    Measurement {
        test_id: spec.test_id,
        backend_id,
        dispatch: Some(decision),
        images_processed: times.len(),
        avg_ms: protocol_average(&times),
        per_image_ms: times,
        passed,
        budget_s,
        notes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingCause {
    AllocationFailure,
    ConfiguredCap,
}

/// Largest square input the memory probe processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryProbeResult {
    /// Side of the largest processed input in units of 100 px at full scale.
    pub max_resolution_units: u32,
    pub limiting_cause: LimitingCause,
    /// Live activation bytes the first failing size needed.
    pub bytes_at_limit: u64,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub start_units: u32,
    pub step_units: u32,
    pub mem_cap_bytes: u64,
    /// Sides are `100 * k * scale` px and the cap is `mem_cap * scale^2`, so
    /// the reported units do not depend on the scale.
    pub scale: f64,
    /// Run the graph at every accepted size rather than only checking the
    /// prediction and reserving the memory.
    pub execute: bool,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn new(mem_cap_bytes: u64) -> Self {
        Self { start_units: 1, step_units: 1, mem_cap_bytes, scale: 1.0, execute: false, seed: 42 }
    }

    pub fn side_px(&self, units: u32) -> usize {
        libm::round(100.0 * f64::from(units) * self.scale).max(1.0) as usize
    }

    pub fn effective_cap(&self) -> f64 {
        self.mem_cap_bytes as f64 * self.scale * self.scale
    }
}

/// Escalates the input side of `graph` until the predicted live bytes exceed
/// the cap or the allocation fails.
pub fn run_memory_probe(
    graph: &Graph,
    kernels: &dyn Kernels,
    backend_id: &str,
    config: &ProbeConfig,
) -> Result<MemoryProbeResult, RunError> {
    if config.start_units == 0 || config.step_units == 0 {
        return Err(RunError::Config("probe start and step must be at least 1".to_string()));
    }
    if !(config.scale.is_finite() && config.scale > 0.0 && config.scale <= 1.0) {
        return Err(RunError::Config(format!("probe scale {} is outside (0, 1]", config.scale)));
    }
    let cap = config.effective_cap();
    let mut best = 0;
    let mut k = config.start_units;
    loop {
        let side = config.side_px(k);
        let shape = [1, side, side, graph.input_shape()[3]];
        let fail = move |cause, bytes| MemoryProbeResult {
            max_resolution_units: best,
            limiting_cause: cause,
            bytes_at_limit: bytes,
            backend_id: backend_id.to_string(),
        };
        let bytes = match peak_activation_bytes(graph, shape) {
            Ok(b) => b,
            Err(_) => return Ok(fail(LimitingCause::ConfiguredCap, 0)),
        };
        if bytes as f64 > cap {
            return Ok(fail(LimitingCause::ConfiguredCap, bytes));
        }
        let mut reserve: Vec<u8> = Vec::new();
        if usize::try_from(bytes).map_or(true, |b| reserve.try_reserve_exact(b).is_err()) {
            return Ok(fail(LimitingCause::AllocationFailure, bytes));
        }
        drop(reserve);
        if config.execute {
            let ok = graph.with_input_shape(shape).ok().and_then(|g| {
                let x = zoo::model_input(&g, &zoo::generate_image((side, side), config.seed)).ok()?;
                execute(&g, &x, kernels).ok()
            });
            if ok.is_none() {
                return Ok(fail(LimitingCause::AllocationFailure, bytes));
            }
        }
        best = k;
        k = match k.checked_add(config.step_units) {
            Some(n) => n,
            None => return Ok(fail(LimitingCause::ConfiguredCap, bytes)),
        };
    }
}

/// Host and configuration a suite ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub host_id: String,
    pub backend: String,
    pub threads: usize,
    pub scale: f64,
    pub seed: u64,
    pub mem_cap_bytes: u64,
    pub budget_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub environment: Environment,
    pub probe_start_units: u32,
    pub probe_step_units: u32,
    pub probe_execute: bool,
}

impl SuiteConfig {
    pub fn new(backend: &str, scale: f64, seed: u64) -> Self {
        Self {
            environment: Environment {
                host_id: "localhost".to_string(),
                backend: backend.to_string(),
                threads: 1,
                scale,
                seed,
                mem_cap_bytes: 256 << 20,
                budget_scale: 1.0,
            },
            probe_start_units: 1,
            probe_step_units: 1,
            probe_execute: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub environment: Environment,
    /// Tests 1 to 8 in order.
    pub measurements: Vec<Measurement>,
    pub memory: MemoryProbeResult,
}

impl SuiteResult {
    pub fn measurement(&self, test_id: u8) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.test_id == test_id)
    }
}

/// Runs tests 1 to 8 and then the memory probe. Failures are recorded and
/// never abort the suite. `progress` sees each finished measurement.
pub fn run_suite(
    config: &SuiteConfig,
    registry: &Registry,
    clock: &mut dyn Clock,
    progress: &mut dyn FnMut(&Measurement),
) -> Result<SuiteResult, RunError> {
    let env = &config.environment;
    if !(env.scale.is_finite() && env.scale > 0.0 && env.scale <= 1.0) {
        return Err(RunError::Config(format!("scale {} is outside (0, 1]", env.scale)));
    }
    if !(env.budget_scale.is_finite() && env.budget_scale > 0.0) {
        return Err(RunError::Config(format!("budget scale {} is not positive", env.budget_scale)));
    }
    if env.threads == 0 {
        return Err(RunError::Config("threads must be at least 1".to_string()));
    }
    if env.backend != AUTO && registry.capability(&env.backend).is_none() {
        return Err(RunError::Config(format!("unknown backend `{}`", env.backend)));
    }

    let mut measurements = Vec::with_capacity(8);
    for test_id in 1..MEMORY_PROBE_TEST {
        let m = match zoo::instantiate(test_id, env.scale, env.seed) {
            Ok((graph, spec)) => {
                let budget = spec.time_budget_s.unwrap_or(0.0) * env.budget_scale;
                run_test(&graph, &spec, registry, &env.backend, budget, clock)
            }
            Err(e) => Measurement::failed(test_id, &env.backend, 0.0, e.to_string()),
        };
        progress(&m);
        measurements.push(m);
    }

    let memory = probe(config, registry).unwrap_or_else(|note| MemoryProbeResult {
        max_resolution_units: 0,
        limiting_cause: LimitingCause::AllocationFailure,
        bytes_at_limit: 0,
        backend_id: note,
    });
    Ok(SuiteResult { environment: env.clone(), measurements, memory })
}

fn probe(config: &SuiteConfig, registry: &Registry) -> Result<MemoryProbeResult, String> {
    let env = &config.environment;
    let (graph, spec) =
        zoo::instantiate(MEMORY_PROBE_TEST, env.scale, env.seed).map_err(|e: ZooError| e.to_string())?;
    let decision = dispatch(registry, &spec, &graph, &env.backend).map_err(|e| e.to_string())?;
    let kernels = registry.kernels(&decision.chosen_backend_id).map_err(|e| e.to_string())?;
    let probe = ProbeConfig {
        start_units: config.probe_start_units,
        step_units: config.probe_step_units,
        mem_cap_bytes: env.mem_cap_bytes,
        scale: env.scale,
        execute: config.probe_execute,
        seed: env.seed,
    };
    run_memory_probe(&graph, kernels, &decision.chosen_backend_id, &probe).map_err(|e| e.to_string())
}
