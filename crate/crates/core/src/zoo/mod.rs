//! The nine benchmark workloads.
//!
//! | test | network                | resolution | int8 | accelerated | budget |
//! |------|------------------------|------------|------|-------------|--------|
//! | 1    | MobileNet-V1           | 224x224    | yes  | yes         | 25 s   |
//! | 2    | Inception-V3           | 346x346    |      | yes         | 40 s   |
//! | 3    | Inception-ResNet-V1    | 512x512    |      |             | 40 s   |
//! | 4    | SRCNN                  | 300x300    |      | yes         | 30 s   |
//! | 5    | VDSR                   | 192x192    |      | yes         | 40 s   |
//! | 6    | SRGAN generator        | 512x512    |      |             | 50 s   |
//! | 7    | ICNet                  | 384x576    |      |             | 20 s   |
//! | 8    | DPED                   | 128x192    |      | yes         | 25 s   |
//! | 9    | SRCNN, memory limit    | 300x300    |      | yes         | none   |
//!
//! Scaled instances shrink the resolution (to a multiple of 8, never below
//! the architecture's minimum) and the budget by the same factor; depth and
//! channel counts never change.

pub mod archs;
pub mod builder;
pub mod calibrate;

use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate, Graph, GraphError, GraphSpec};
use crate::kernels::optimized::{OptimizedKernels, Serial};
use crate::kernels::quant::quantize;
use crate::kernels::KernelError;
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::{DType, Tensor};

pub use calibrate::CalibrationError;

/// Test whose graph the memory probe reuses.
pub const MEMORY_PROBE_TEST: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    MobilenetV1,
    InceptionV3,
    InceptionResnetV1,
    Srcnn,
    Vdsr,
    SrganGenerator,
    Icnet,
    Dped,
}

impl Architecture {
    pub fn build(self, res: (usize, usize), seed: u64) -> Result<GraphSpec, GraphError> {
        match self {
            Architecture::MobilenetV1 => archs::mobilenet_v1(res, seed),
            Architecture::InceptionV3 => archs::inception_v3(res, seed),
            Architecture::InceptionResnetV1 => archs::inception_resnet_v1(res, seed),
            Architecture::Srcnn => archs::srcnn(res, seed),
            Architecture::Vdsr => archs::vdsr(res, seed),
            Architecture::SrganGenerator => archs::srgan_generator(res, seed),
            Architecture::Icnet => archs::icnet(res, seed),
            Architecture::Dped => archs::dped(res, seed),
        }
    }

    /// Smallest side the architecture's downsampling chain accepts.
    pub fn min_side(self) -> usize {
        match self {
            Architecture::MobilenetV1 => 32,
            Architecture::InceptionV3 | Architecture::InceptionResnetV1 => 80,
            Architecture::Icnet => 64,
            Architecture::SrganGenerator => 32,
            Architecture::Srcnn | Architecture::Vdsr | Architecture::Dped => 16,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::MobilenetV1 => "mobilenet_v1",
            Architecture::InceptionV3 => "inception_v3",
            Architecture::InceptionResnetV1 => "inception_resnet_v1",
            Architecture::Srcnn => "srcnn",
            Architecture::Vdsr => "vdsr",
            Architecture::SrganGenerator => "srgan_generator",
            Architecture::Icnet => "icnet",
            Architecture::Dped => "dped",
        })
    }
}

/// Full-scale definition of one test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestDefaults {
    pub test_id: u8,
    pub name: &'static str,
    pub architecture: Architecture,
    pub resolution: (usize, usize),
    pub quantized: bool,
    pub accelerator_eligible: bool,
    pub time_budget_s: Option<f64>,
}

const fn test(
    test_id: u8,
    name: &'static str,
    architecture: Architecture,
    resolution: (usize, usize),
    accelerator_eligible: bool,
    time_budget_s: Option<f64>,
) -> TestDefaults {
    TestDefaults {
        test_id,
        name,
        architecture,
        resolution,
        quantized: test_id == 1,
        accelerator_eligible,
        time_budget_s,
    }
}

pub const TESTS: [TestDefaults; 9] = [
    test(1, "MobileNet-V1 int8 classification", Architecture::MobilenetV1, (224, 224), true, Some(25.0)),
    test(2, "Inception-V3 classification", Architecture::InceptionV3, (346, 346), true, Some(40.0)),
    test(3, "Inception-ResNet-V1 face embedding", Architecture::InceptionResnetV1, (512, 512), false, Some(40.0)),
    test(4, "SRCNN super-resolution", Architecture::Srcnn, (300, 300), true, Some(30.0)),
    test(5, "VDSR super-resolution", Architecture::Vdsr, (192, 192), true, Some(40.0)),
    test(6, "SRGAN super-resolution", Architecture::SrganGenerator, (512, 512), false, Some(50.0)),
    test(7, "ICNet segmentation", Architecture::Icnet, (384, 576), false, Some(20.0)),
    test(8, "DPED photo enhancement", Architecture::Dped, (128, 192), true, Some(25.0)),
    test(9, "SRCNN memory limit", Architecture::Srcnn, (300, 300), true, None),
];

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("unknown test id {0} (expected 1..=9)")]
    UnknownTest(u8),
    #[error("scale {0} is outside (0, 1]")]
    ScaleOutOfRange(f64),
    #[error("test {test_id}: `{field}` {detail}")]
    Invariant { test_id: u8, field: &'static str, detail: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub fn defaults(test_id: u8) -> Result<&'static TestDefaults, ZooError> {
    TESTS.iter().find(|t| t.test_id == test_id).ok_or(ZooError::UnknownTest(test_id))
}

fn check_scale(scale: f64) -> Result<(), ZooError> {
    if scale.is_finite() && scale > 0.0 && scale <= 1.0 {
        Ok(())
    } else {
        Err(ZooError::ScaleOutOfRange(scale))
    }
}

fn scale_side(side: usize, scale: f64, min: usize) -> usize {
    if scale >= 1.0 {
        return side;
    }
    let eighths = libm::round(side as f64 * scale / 8.0) as usize;
    (eighths * 8).max(min)
}

/// Input resolution of an architecture at `scale`.
pub fn scaled_resolution(res: (usize, usize), scale: f64, architecture: Architecture) -> (usize, usize) {
    let min = architecture.min_side();
    (scale_side(res.0, scale, min), scale_side(res.1, scale, min))
}

/// One benchmark test at a chosen scale and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub test_id: u8,
    pub name: String,
    pub architecture: Architecture,
    pub input_resolution: (usize, usize),
    pub quantized: bool,
    pub accelerator_eligible: bool,
    pub time_budget_s: Option<f64>,
    pub scale: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn new(test_id: u8, scale: f64, seed: u64) -> Result<Self, ZooError> {
        let d = defaults(test_id)?;
        check_scale(scale)?;
        Ok(Self {
            test_id,
            name: d.name.to_string(),
            architecture: d.architecture,
            input_resolution: scaled_resolution(d.resolution, scale, d.architecture),
            quantized: d.quantized,
            accelerator_eligible: d.accelerator_eligible,
            time_budget_s: d.time_budget_s.map(|b| b * scale),
            scale,
            seed,
        })
    }

    /// Checks a (possibly hand-edited) spec against the test definitions.
    pub fn validate(&self) -> Result<(), ZooError> {
        let d = defaults(self.test_id)?;
        check_scale(self.scale)?;
        let fail =
            |field, detail: &str| Err(ZooError::Invariant { test_id: self.test_id, field, detail: detail.to_string() });
        if self.quantized && self.test_id != 1 {
            return fail("quantized", "may only be set for test 1");
        }
        if self.quantized != d.quantized {
            return fail("quantized", "differs from the test definition");
        }
        if self.accelerator_eligible != d.accelerator_eligible {
            return fail("accelerator_eligible", "differs from the test definition");
        }
        if self.architecture != d.architecture {
            return fail("architecture", "differs from the test definition");
        }
        if self.input_resolution != scaled_resolution(d.resolution, self.scale, d.architecture) {
            return fail("input_resolution", "does not match the scaled default");
        }
        if self.time_budget_s != d.time_budget_s.map(|b| b * self.scale) {
            return fail("time_budget_s", "does not match the scaled default");
        }
        Ok(())
    }

    /// Test whose graph this one reuses, if any.
    pub fn aliases(&self) -> Option<u8> {
        (self.test_id == MEMORY_PROBE_TEST).then_some(4)
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [1, self.input_resolution.0, self.input_resolution.1, 3]
    }
}

/// Builds the graph for a spec. Int8 workloads are calibrated on the input
/// image for the spec's seed.
pub fn build(spec: &WorkloadSpec) -> Result<Graph, ZooError> {
    spec.validate()?;
    let float = validate(spec.architecture.build(spec.input_resolution, spec.seed)?)?;
    if !spec.quantized {
        return Ok(float);
    }
    let image = generate_input(spec, spec.seed);
    let kernels = OptimizedKernels::new(Serial);
    Ok(validate(calibrate::quantize_graph(&float, &image, &kernels)?)?)
}

pub fn instantiate(test_id: u8, scale: f64, seed: u64) -> Result<(Graph, WorkloadSpec), ZooError> {
    let spec = WorkloadSpec::new(test_id, scale, seed)?;
    Ok((build(&spec)?, spec))
}

/// Uniform `[0, 1]` RGB image.
pub fn generate_image(resolution: (usize, usize), seed: u64) -> Tensor {
    let (h, w) = resolution;
    let mut rng = SplitMix64::new(derive_seed(seed, "input"));
    let data = (0..h * w * 3).map(|_| rng.next_unit()).collect();
    Tensor::from_f32([1, h, w, 3], data).expect("positive resolution")
}

pub fn generate_input(spec: &WorkloadSpec, seed: u64) -> Tensor {
    generate_image(spec.input_resolution, seed)
}

/// Converts a float image to the graph's input dtype.
pub fn model_input(graph: &Graph, image: &Tensor) -> Result<Tensor, ZooError> {
    match (graph.dtype(), graph.spec().input_qparams) {
        (DType::Int8q, Some(qp)) => Ok(quantize(image, qp)?),
        _ => Ok(image.clone()),
    }
}
