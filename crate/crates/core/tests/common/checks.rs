//! Headline checks shared by the core integration tests and the acceptance
//! target. Each returns a one-line summary on success.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use inferbench_core::aggregate::remove_outliers;
use inferbench_core::backend::{BackendCapability, DispatchReason, ReferenceKernels, Registry, REFERENCE};
use inferbench_core::graph::{
    count_macs, count_params, peak_activation_bytes, serialized_weight_bytes, validate, Graph,
};
use inferbench_core::kernels::optimized::Serial;
use inferbench_core::runner::{
    dispatch, protocol_average, protocol_passed, run_memory_probe, time_images, Environment, LimitingCause,
    Measurement, MemoryProbeResult, ProbeConfig, ScriptedClock, SuiteResult, AUTO,
};
use inferbench_core::scoring::{aggregate_score, calibrate_profile, fsum};
use inferbench_core::tensor::DType;
use inferbench_core::zoo::{self, Architecture};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn graph(arch: Architecture, side: usize) -> Result<Graph, String> {
    validate(arch.build((side, side), 42).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

/// Independent per-layer tally of the canonical nets, frozen.
pub const MOBILENET_MACS_224: u64 = 568_741_376;
pub const INCEPTION_V3_MACS_299: u64 = 5_718_902_112;

pub fn mac_counts() -> Check {
    let m = graph(Architecture::MobilenetV1, 224)?;
    let mm = count_macs(&m, m.input_shape()).map_err(|e| e.to_string())?;
    ensure!(mm == MOBILENET_MACS_224, "MobileNet MACs {mm} differ from layer tally {MOBILENET_MACS_224}");
    ensure!(within(mm as f64, 569e6, 0.05), "MobileNet MACs {mm} not within 5% of 569M");
    let i = graph(Architecture::InceptionV3, 299)?;
    let im = count_macs(&i, i.input_shape()).map_err(|e| e.to_string())?;
    ensure!(im == INCEPTION_V3_MACS_299, "Inception-V3 MACs {im} differ from layer tally {INCEPTION_V3_MACS_299}");
    ensure!(within(im as f64, 5000e6, 0.15), "Inception-V3 MACs {im} not within 15% of 5000M");
    Ok(format!(
        "MobileNet-V1@224 {mm} MACs (-0.05%), Inception-V3@299 {im} MACs (+{:.1}%)",
        (im as f64 / 5e9 - 1.0) * 100.0
    ))
}

pub fn parameter_counts() -> Check {
    // (test, reference value, tolerance; None means exact)
    let targets: [(u8, f64, Option<f64>); 7] = [
        (1, 4.2e6, Some(0.03)),
        (3, 22.8e6, Some(0.05)),
        (4, 69_251.0, None),
        (5, 631_299.0, Some(0.005)),
        (6, 1.5e6, Some(0.10)),
        (7, 6.7e6, Some(0.10)),
        (8, 400e3, Some(0.10)),
    ];
    let mut summary = Vec::new();
    for (id, target, tol) in targets {
        let d = zoo::defaults(id).map_err(|e| e.to_string())?;
        let g = graph(d.architecture, d.architecture.min_side())?;
        let p = count_params(&g);
        match tol {
            None => ensure!(p as f64 == target, "T{id}: {p} params, expected exactly {target}"),
            Some(t) => ensure!(within(p as f64, target, t), "T{id}: {p} params not within {}% of {target}", t * 100.0),
        }
        summary.push(format!("T{id}={p}"));
    }
    Ok(summary.join(" "))
}

pub fn quantized_size_ratio() -> Check {
    let (int8, spec) = zoo::instantiate(1, 0.25, 42).map_err(|e| e.to_string())?;
    ensure!(int8.dtype() == DType::Int8q, "T1 is not int8");
    let float = validate(spec.architecture.build(spec.input_resolution, spec.seed).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let (fb, qb) = (serialized_weight_bytes(&float), serialized_weight_bytes(&int8));
    let quarter = fb as f64 / 4.0;
    ensure!(within(qb as f64, quarter, 0.02), "int8 bytes {qb} not within 2% of float/4 = {quarter}");
    Ok(format!("float {fb} B, int8 {qb} B, ratio {:.3}", fb as f64 / qb as f64))
}

pub fn analyzer_ratios() -> Check {
    let macs = |id: u8| -> Result<(f64, f64), String> {
        let d = zoo::defaults(id).map_err(|e| e.to_string())?;
        let g =
            validate(d.architecture.build(d.resolution, 42).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let m = count_macs(&g, g.input_shape()).map_err(|e| e.to_string())? as f64;
        Ok((m, (d.resolution.0 * d.resolution.1) as f64))
    };
    let ((m5, px5), (m6, _), (m8, px8)) = (macs(5)?, macs(6)?, macs(8)?);
    let per_pixel = (m5 / px5) / (m8 / px8);
    let whole = m6 / m8;
    ensure!((1.4..=1.75).contains(&per_pixel), "per-pixel T5/T8 = {per_pixel:.4}");
    ensure!((1.7..=3.0).contains(&whole), "whole-image T6/T8 = {whole:.4}");
    Ok(format!("per-pixel T5/T8 {per_pixel:.3}, whole-image T6/T8 {whole:.3}"))
}

/// Bytes per output pixel of the SRCNN peak: the 64-channel first conv
/// output and the 32-channel second conv output live together, f32.
pub const SRCNN_PEAK_BYTES_PER_PX: u64 = (64 + 32) * 4;

pub fn memory_probe() -> Check {
    let (g, _) = zoo::instantiate(9, 1.0, 42).map_err(|e| e.to_string())?;
    let peak = |side: usize| peak_activation_bytes(&g, [1, side, side, 3]).map_err(|e| e.to_string());

    // Linear-in-area fit over 100..500 px.
    let sides: Vec<usize> = (100..=500).step_by(50).collect();
    let pts: Vec<(f64, f64)> =
        sides.iter().map(|&l| Ok(((l * l) as f64, peak(l)? as f64))).collect::<Result<_, String>>()?;
    let c = fsum(pts.iter().map(|(a, p)| a * p)) / fsum(pts.iter().map(|(a, _)| a * a));
    let residual = pts.iter().map(|(a, p)| (p - c * a).abs() / p).fold(0.0, f64::max);
    ensure!(residual < 0.01, "c*L^2 fit residual {residual:.4}");
    for &l in &sides {
        ensure!(
            peak(l)? == SRCNN_PEAK_BYTES_PER_PX * (l * l) as u64,
            "peak at {l} px is not {SRCNN_PEAK_BYTES_PER_PX} B/px"
        );
    }

    let mut last = 0;
    for cap_mb in [256u64, 512, 1024] {
        let cap = cap_mb << 20;
        // Largest step whose predicted peak fits.
        let mut predicted = 0;
        while peak(100 * (predicted as usize + 1))? <= cap {
            predicted += 1;
        }
        let r: MemoryProbeResult =
            run_memory_probe(&g, &ReferenceKernels, REFERENCE, &ProbeConfig::new(cap)).map_err(|e| e.to_string())?;
        ensure!(
            r.limiting_cause == LimitingCause::ConfiguredCap,
            "cap {cap_mb} MiB: stopped by {:?}",
            r.limiting_cause
        );
        ensure!(
            r.max_resolution_units == predicted,
            "cap {cap_mb} MiB: probe {} vs prediction {predicted}",
            r.max_resolution_units
        );
        ensure!(r.max_resolution_units >= last, "doubling the cap to {cap_mb} MiB lowered the result");
        last = r.max_resolution_units;
    }
    let at256 =
        run_memory_probe(&g, &ReferenceKernels, REFERENCE, &ProbeConfig::new(256 << 20)).map_err(|e| e.to_string())?;
    ensure!(at256.max_resolution_units == 8, "256 MiB probe gave {} units, expected 8", at256.max_resolution_units);
    Ok(format!(
        "256 MiB -> 8 units (prediction exact), monotone to 1 GiB, fit residual {:.2e}, c = {c:.1} B/px",
        residual
    ))
}

/// (per-image costs in ms, budget in ms, images started, passed, reported average)
pub const TIMING_CASES: [(&[f64], f64, usize, bool, f64); 12] = [
    (&[3000.0], 10_000.0, 4, true, 3000.0),
    (&[30_000.0], 25_000.0, 1, false, 30_000.0),
    (&[9000.0], 10_000.0, 2, true, 9000.0),
    (&[10_000.0], 10_000.0, 1, true, 10_000.0),
    (&[1000.0, 2000.0, 3000.0, 4000.0], 10_000.0, 4, true, 3500.0),
    (&[5000.0, 100.0], 6000.0, 11, true, 100.0),
    (&[26_000.0, 1.0], 25_000.0, 1, false, 26_000.0),
    (&[2500.0], 10_000.0, 4, true, 2500.0),
    (&[4000.0, 4000.0, 1000.0], 10_000.0, 4, true, 1000.0),
    (&[7000.0, 7000.0], 10_000.0, 2, true, 7000.0),
    (&[100.0, 200.0, 300.0], 1000.0, 5, true, 300.0),
    (&[1500.0, 3000.0], 3000.0, 2, true, 2250.0),
];

pub fn timing_protocol() -> Check {
    for (i, &(costs, budget, images, passed, avg)) in TIMING_CASES.iter().enumerate() {
        let mut clock = ScriptedClock::new(costs.to_vec()).map_err(|e| e.to_string())?;
        let (times, err) = time_images(budget, 0, &mut clock, |i| i, |_| Ok::<(), ()>(()));
        ensure!(err.is_none(), "case {i}: unexpected error");
        let got = (times.len(), protocol_passed(&times, budget), protocol_average(&times));
        ensure!(got == (images, passed, avg), "case {i}: got {got:?}, expected {:?}", (images, passed, avg));
    }
    Ok(format!("{} scripted sequences pinned exactly", TIMING_CASES.len()))
}

pub fn dispatch_rules() -> Check {
    let full = Registry::with_builtins(Serial);
    for id in 1..=9u8 {
        let (g, spec) = zoo::instantiate(id, 0.25, 42).map_err(|e| e.to_string())?;
        let kinds: std::collections::BTreeSet<_> = g.nodes().iter().map(|n| n.op.kind()).collect();
        for &missing in &kinds {
            let mut r = Registry::new();
            r.register(BackendCapability::total(REFERENCE, ""), Box::new(ReferenceKernels))
                .map_err(|e| e.to_string())?;
            let ops = inferbench_core::graph::OpKind::ALL
                .iter()
                .filter(|&&k| k != missing)
                .flat_map(|&k| [(k, DType::Float32), (k, DType::Int8q)]);
            r.register(BackendCapability::new("accel", "", ops), Box::new(ReferenceKernels))
                .map_err(|e| e.to_string())?;
            let d = r.select_backend(&g, "accel").map_err(|e| e.to_string())?;
            ensure!(d.chosen_backend_id == REFERENCE, "T{id} without {missing}: chose {}", d.chosen_backend_id);
            ensure!(
                matches!(&d.reason, DispatchReason::FallbackUnsupportedOp { op_kind, .. } if *op_kind == missing),
                "T{id} without {missing}: reason {:?}",
                d.reason
            );
        }
        for preferred in [AUTO, "optimized", "quantized"] {
            let d = dispatch(&full, &spec, &g, preferred).map_err(|e| e.to_string())?;
            if [3, 6, 7].contains(&id) {
                ensure!(
                    d.chosen_backend_id == REFERENCE && d.reason == DispatchReason::ForcedByFlag,
                    "T{id} preferring {preferred} dispatched to {}",
                    d.chosen_backend_id
                );
            }
        }
    }
    Ok("single missing op forces reference on all 9 workloads; T3/T6/T7 pinned to reference".into())
}

pub fn suite(avgs: [f64; 8], units: u32) -> SuiteResult {
    SuiteResult {
        environment: Environment {
            host_id: "fixture".into(),
            backend: REFERENCE.into(),
            threads: 1,
            scale: 0.25,
            seed: 42,
            mem_cap_bytes: 256 << 20,
            budget_scale: 1.0,
        },
        measurements: avgs
            .iter()
            .enumerate()
            .map(|(i, &a)| Measurement {
                test_id: i as u8 + 1,
                backend_id: REFERENCE.into(),
                dispatch: None,
                images_processed: 3,
                per_image_ms: vec![a, a, a],
                avg_ms: a,
                passed: true,
                budget_s: 10.0,
                notes: vec![],
            })
            .collect(),
        memory: MemoryProbeResult {
            max_resolution_units: units,
            limiting_cause: LimitingCause::ConfiguredCap,
            bytes_at_limit: 1,
            backend_id: REFERENCE.into(),
        },
    }
}

pub fn scoring() -> Check {
    let mut rng = inferbench_core::rng::SplitMix64::new(9);
    let base = [85.2, 104.75, 1835.19, 48.58, 164.83, 3261.53, 633.37, 86.67];
    for _ in 0..2000 {
        let avgs = base.map(|b| b * (0.2 + 5.0 * f64::from(rng.next_unit())));
        let units = 1 + (rng.next_u64() % 20) as u32;
        let target = 1.0 + 5000.0 * f64::from(rng.next_unit());
        let s = suite(avgs, units);
        let p = calibrate_profile(&s, target, "fixture").map_err(|e| e.to_string())?;
        let total = aggregate_score(&s, &p).map_err(|e| e.to_string())?.total;
        ensure!(total == target, "fixed point: {total} != {target}");

        let faster = suite(avgs.map(|a| a / 2.0), units * 2);
        let doubled = aggregate_score(&faster, &p).map_err(|e| e.to_string())?.total;
        ensure!(doubled == 2.0 * target, "linearity: {doubled} != 2 x {target}");

        let mut failed = s.clone();
        let k = (rng.next_u64() % 8) as usize;
        failed.measurements[k].passed = false;
        let r = aggregate_score(&failed, &p).map_err(|e| e.to_string())?;
        ensure!(
            r.per_test_points[k] == 0.0 && r.failed == [k as u8 + 1],
            "failed T{} scored {}",
            k + 1,
            r.per_test_points[k]
        );
    }
    Ok("fixed point exact, halve-runtimes/double-memory doubles the total, failed tests 0 (2000 random suites)".into())
}

pub fn outlier_fixture() -> Check {
    let kept = remove_outliers(&[100.0, 102.0, 98.0, 1000.0]);
    let mean = fsum(kept.iter().copied()) / kept.len() as f64;
    ensure!(kept == [100.0, 102.0, 98.0], "kept {kept:?}");
    ensure!(mean == 100.0, "mean {mean}");
    Ok("[100, 102, 98, 1000] -> mean 100".into())
}
