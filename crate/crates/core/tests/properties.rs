use std::collections::BTreeMap;

use inferbench_core::aggregate::remove_outliers;
use inferbench_core::backend::{BackendCapability, DispatchReason, ReferenceKernels, Registry, REFERENCE};
use inferbench_core::graph::{count_macs, validate, Graph, GraphSpec, Op, OpKind, OperatorNode, Param};
use inferbench_core::kernels::quant;
use inferbench_core::kernels::{Activation, ConvAttrs, Kernels, Padding};
use inferbench_core::runner::{time_images, ScriptedClock};
use inferbench_core::tensor::DType;
use inferbench_core::{QuantParams, Tensor};
use proptest::prelude::*;

fn tensor(shape: [usize; 4], data: Vec<f32>) -> Tensor {
    Tensor::from_f32(shape, data).unwrap()
}

/// Input dims plus conv geometry for a same-padded conv.
fn conv_case() -> impl Strategy<Value = ([usize; 4], usize, usize, usize)> {
    (1usize..=8, 1usize..=8, 1usize..=4, 1usize..=4, 1usize..=3, 1usize..=2)
        .prop_map(|(h, w, c, cout, k, s)| ([1, h, w, c], cout, k, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_linear(
        (d, cout, k, s) in conv_case(),
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
        seed in any::<u64>(),
    ) {
        let n: usize = d.iter().product();
        let mut rng = inferbench_core::rng::SplitMix64::new(seed);
        let mut draw = |len: usize| (0..len).map(|_| rng.next_range(-1.0, 1.0)).collect::<Vec<f32>>();
        let (x, y, w) = (draw(n), draw(n), draw(k * k * d[3] * cout));
        let wt = tensor([k, k, d[3], cout], w);
        let attrs = ConvAttrs::new((s, s), Padding::Same);
        let zero = vec![0.0; cout];
        let conv = |v: Vec<f32>| ReferenceKernels.conv2d(&tensor(d, v), &wt, &zero, &attrs).unwrap().into_f32().unwrap();
        let mixed: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = conv(mixed);
        let (cx, cy) = (conv(x), conv(y));
        for (i, l) in lhs.iter().enumerate() {
            let r = a * cx[i] + b * cy[i];
            prop_assert!((l - r).abs() <= 1e-5 * r.abs().max(1.0), "{l} vs {r}");
        }
    }

    #[test]
    fn depthwise_channels_are_independent(
        (d, _, k, s) in conv_case(),
        seed in any::<u64>(),
        channel in 0usize..4,
        bump in 0.5f32..3.0,
    ) {
        let channel = channel % d[3];
        let n: usize = d.iter().product();
        let mut rng = inferbench_core::rng::SplitMix64::new(seed);
        let x: Vec<f32> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let w: Vec<f32> = (0..k * k * d[3]).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let wt = tensor([k, k, d[3], 1], w);
        let bias = vec![0.1; d[3]];
        let attrs = ConvAttrs::new((s, s), Padding::Same).with_activation(Activation::Relu);
        let run = |v: Vec<f32>| ReferenceKernels.depthwise_conv2d(&tensor(d, v), &wt, &bias, &attrs).unwrap().into_f32().unwrap();
        let base = run(x.clone());
        let perturbed: Vec<f32> = x.iter().enumerate().map(|(i, &v)| if i % d[3] == channel { v + bump } else { v }).collect();
        let moved = run(perturbed);
        for (i, (p, q)) in base.iter().zip(&moved).enumerate() {
            if i % d[3] != channel {
                prop_assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn quant_round_trip_within_half_scale(
        lo in -8.0f32..-0.01,
        hi in 0.01f32..8.0,
        fractions in prop::collection::vec(0.0f32..=1.0, 1..64),
    ) {
        let qp = QuantParams::from_range(lo, hi);
        // In-range: the interval the 256 codes actually cover.
        let (rlo, rhi) = (qp.scale() * (-128 - i32::from(qp.zero_point())) as f32, qp.scale() * (127 - i32::from(qp.zero_point())) as f32);
        let x: Vec<f32> = fractions.iter().map(|f| rlo + (rhi - rlo) * f).collect();
        let back = quant::dequantize(&quant::quantize(&tensor([1, 1, 1, x.len()], x.clone()), qp).unwrap()).unwrap();
        for (a, b) in back.as_f32().unwrap().iter().zip(&x) {
            prop_assert!(f64::from((a - b).abs()) <= f64::from(qp.scale()) / 2.0 * (1.0 + 1e-5), "{a} vs {b} at scale {}", qp.scale());
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..40, seed in any::<u64>(), spread in 0.1f32..50.0) {
        let mut rng = inferbench_core::rng::SplitMix64::new(seed);
        let x: Vec<f32> = (0..rows * cols).map(|_| rng.next_range(-spread, spread)).collect();
        let y = ReferenceKernels.softmax(&tensor([1, 1, rows, cols], x)).unwrap().into_f32().unwrap();
        for row in y.chunks(cols) {
            let s: f64 = row.iter().map(|&v| f64::from(v)).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6, "{s}");
        }
    }

    #[test]
    fn outlier_removal_is_idempotent(samples in prop::collection::vec(prop_oneof![1.0f64..200.0, 500.0f64..5000.0], 0..20)) {
        let once = remove_outliers(&samples);
        prop_assert_eq!(remove_outliers(&once), once);
    }

    #[test]
    fn outlier_removal_ignores_order(
        samples in prop::collection::vec(prop_oneof![1.0f64..200.0, 500.0f64..5000.0, Just(100.0)], 0..20),
        rotate in 0usize..20,
    ) {
        let mut shuffled = samples.clone();
        shuffled.reverse();
        if !shuffled.is_empty() {
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
        }
        let sort = |mut v: Vec<f64>| { v.sort_by(f64::total_cmp); v };
        prop_assert_eq!(sort(remove_outliers(&samples)), sort(remove_outliers(&shuffled)));
    }

    #[test]
    fn faster_backend_never_processes_fewer_images(
        costs in prop::collection::vec(0.5f64..40.0, 1..12),
        budget in 1.0f64..200.0,
    ) {
        let count = |costs: Vec<f64>| {
            let mut clock = ScriptedClock::new(costs).unwrap();
            time_images(budget, 0, &mut clock, |i| i, |_| Ok::<(), ()>(())).0.len()
        };
        let halved = costs.iter().map(|c| c / 2.0).collect();
        prop_assert!(count(halved) >= count(costs));
    }

    #[test]
    fn dispatch_is_deterministic_and_never_picks_an_incomplete_backend(
        graph in random_graph(),
        mask in any::<u16>(),
    ) {
        let mut registry = Registry::new();
        registry.register(BackendCapability::total(REFERENCE, ""), Box::new(ReferenceKernels)).unwrap();
        let ops = OpKind::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &k)| (k, DType::Float32));
        let cap = BackendCapability::new("partial", "", ops);
        registry.register(cap, Box::new(ReferenceKernels)).unwrap();
        let d = registry.select_backend(&graph, "partial").unwrap();
        prop_assert_eq!(&registry.select_backend(&graph, "partial").unwrap(), &d);
        let chosen = registry.capability(&d.chosen_backend_id).unwrap();
        prop_assert!(graph.nodes().iter().all(|n| chosen.supports(n.op.kind(), graph.dtype())));
        if matches!(d.reason, DispatchReason::FallbackUnsupportedOp { .. }) {
            prop_assert_eq!(d.chosen_backend_id.as_str(), REFERENCE);
        }
    }

    #[test]
    fn same_conv_macs_scale_with_area(
        layers in prop::collection::vec((1usize..=5, 1usize..=6, any::<bool>()), 1..5),
        h in 2usize..10,
        w in 2usize..10,
        c in 1usize..4,
    ) {
        let graph = same_conv_chain(&layers, c);
        let at = |hh, ww| count_macs(&graph, [1, hh, ww, c]).unwrap();
        prop_assert_eq!(at(2 * h, 3 * w), 6 * at(h, w));
        prop_assert_eq!(at(h, w) % (h * w) as u64, 0);
    }
}

/// Stride-1 same-padded convs and depthwise convs with the given kernels.
fn same_conv_chain(layers: &[(usize, usize, bool)], c: usize) -> Graph {
    let mut nodes = Vec::new();
    let mut weights = BTreeMap::new();
    let mut prev = "input".to_string();
    let mut ch = c;
    for (i, &(k, filters, depthwise)) in layers.iter().enumerate() {
        let id = format!("n{i}");
        let (op, shape, out) = if depthwise {
            (
                Op::DepthwiseConv2d {
                    kernel: (k, k),
                    stride: (1, 1),
                    padding: Padding::Same,
                    activation: Activation::None,
                },
                [k, k, ch, 1],
                ch,
            )
        } else {
            (
                Op::Conv2d {
                    kernel: (k, k),
                    filters,
                    stride: (1, 1),
                    padding: Padding::Same,
                    activation: Activation::Relu,
                },
                [k, k, ch, filters],
                filters,
            )
        };
        weights.insert(format!("{id}/w"), Param::Tensor(Tensor::zeros(shape).unwrap()));
        weights.insert(format!("{id}/b"), Param::Bias(vec![0.0; out]));
        nodes.push(OperatorNode::new(id.clone(), op, &[&prev]).with_weights(&format!("{id}/w"), &format!("{id}/b")));
        prev = id;
        ch = out;
    }
    validate(GraphSpec {
        name: "chain".into(),
        input_shape: [1, 8, 8, c],
        nodes,
        output_id: prev,
        weights,
        dtype_profile: DType::Float32,
        input_qparams: None,
    })
    .unwrap()
}

/// Small float chains mixing every op kind that takes one input.
fn random_graph() -> impl Strategy<Value = Graph> {
    prop::collection::vec(0u8..6, 1..6).prop_map(|kinds| {
        let mut nodes = Vec::new();
        let mut weights = BTreeMap::new();
        let mut prev = "input".to_string();
        let mut ch = 2;
        for (i, k) in kinds.iter().enumerate() {
            let id = format!("n{i}");
            let op = match k {
                0 => {
                    weights.insert(format!("{id}/w"), Param::Tensor(Tensor::zeros([3, 3, ch, 3]).unwrap()));
                    weights.insert(format!("{id}/b"), Param::Bias(vec![0.0; 3]));
                    ch = 3;
                    Op::Conv2d {
                        kernel: (3, 3),
                        filters: 3,
                        stride: (1, 1),
                        padding: Padding::Same,
                        activation: Activation::None,
                    }
                }
                1 => {
                    weights.insert(format!("{id}/w"), Param::Tensor(Tensor::zeros([3, 3, ch, 1]).unwrap()));
                    weights.insert(format!("{id}/b"), Param::Bias(vec![0.0; ch]));
                    Op::DepthwiseConv2d {
                        kernel: (3, 3),
                        stride: (1, 1),
                        padding: Padding::Same,
                        activation: Activation::None,
                    }
                }
                2 => Op::Relu,
                3 => Op::Pool {
                    kind: inferbench_core::kernels::PoolKind::Max,
                    window: (2, 2),
                    stride: (1, 1),
                    padding: Padding::Same,
                },
                4 => Op::ResizeBilinear { size: (6, 6) },
                _ => Op::Softmax,
            };
            let mut node = OperatorNode::new(id.clone(), op, &[&prev]);
            if *k <= 1 {
                node = node.with_weights(&format!("{id}/w"), &format!("{id}/b"));
            }
            nodes.push(node);
            prev = id;
        }
        validate(GraphSpec {
            name: "random".into(),
            input_shape: [1, 6, 6, 2],
            nodes,
            output_id: prev,
            weights,
            dtype_profile: DType::Float32,
            input_qparams: None,
        })
        .unwrap()
    })
}
