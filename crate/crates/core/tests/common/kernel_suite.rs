//! Randomized oracle comparison for every kernel, shared by the core
//! integration tests and the acceptance target.
#![allow(dead_code)]

use inferbench_core::backend::ReferenceKernels;
use inferbench_core::kernels::optimized::{OptimizedKernels, Serial};
use inferbench_core::kernels::quant;
use inferbench_core::kernels::quantized::QuantizedKernels;
use inferbench_core::kernels::{Activation, ConvAttrs, Kernels, Padding, PoolAttrs, PoolKind};
use inferbench_core::{QuantParams, Tensor};

use super::oracles::{self as o, Gen};

pub const FLOAT_TOL: f64 = 1e-6;

#[derive(Debug, Default, Clone)]
pub struct SuiteStats {
    /// Randomized shapes checked per kernel family.
    pub cases: Vec<(&'static str, usize)>,
    pub worst_float_rel: f64,
    /// Worst deviation in units of the output scale.
    pub worst_quant_scales: f64,
    pub failures: Vec<String>,
}

impl SuiteStats {
    fn record(&mut self, kernel: &'static str) {
        match self.cases.iter_mut().find(|(k, _)| *k == kernel) {
            Some((_, n)) => *n += 1,
            None => self.cases.push((kernel, 1)),
        }
    }

    fn float(&mut self, kernel: &'static str, ctx: &str, got: &Tensor, want: &[f32]) {
        self.record(kernel);
        let g = got.as_f32().expect("float output");
        if g.len() != want.len() {
            self.failures.push(format!("{kernel} {ctx}: length {} vs {}", g.len(), want.len()));
            return;
        }
        let r = o::worst_relative(g, want);
        self.worst_float_rel = self.worst_float_rel.max(r);
        if r > FLOAT_TOL {
            self.failures.push(format!("{kernel} {ctx}: relative error {r:e}"));
        }
    }

    fn quant(&mut self, kernel: &'static str, ctx: &str, got: &Tensor, want: &[f32], out_scale: f32) {
        self.record(kernel);
        let g = got.to_real();
        if g.len() != want.len() {
            self.failures.push(format!("{kernel} {ctx}: length {} vs {}", g.len(), want.len()));
            return;
        }
        let s = o::worst_abs(&g, want) / f64::from(out_scale);
        self.worst_quant_scales = self.worst_quant_scales.max(s);
        if s > 2.0 {
            self.failures.push(format!("{kernel} {ctx}: {s:.3} output scales off"));
        }
    }

    pub fn total_cases(&self) -> usize {
        self.cases.iter().map(|(_, n)| n).sum()
    }

    pub fn min_cases(&self) -> usize {
        self.cases.iter().map(|(_, n)| *n).min().unwrap_or(0)
    }
}

fn padding(same: bool) -> Padding {
    if same {
        Padding::Same
    } else {
        Padding::Valid
    }
}

fn act(relu: bool) -> Activation {
    if relu {
        Activation::Relu
    } else {
        Activation::None
    }
}

fn float_sets() -> Vec<(&'static str, Box<dyn Kernels>)> {
    vec![("reference", Box::new(ReferenceKernels)), ("optimized", Box::new(OptimizedKernels::new(Serial)))]
}

fn quant_sets() -> Vec<(&'static str, Box<dyn Kernels>)> {
    vec![("reference", Box::new(ReferenceKernels)), ("quantized", Box::new(QuantizedKernels::new(Serial)))]
}

/// Random spatial input of at most 16x16x8.
fn input(g: &mut Gen) -> o::Dims {
    [g.int(1, 2), g.int(1, 16), g.int(1, 16), g.int(1, 8)]
}

/// Kernel extent and stride that fit the input under the chosen padding.
fn window(g: &mut Gen, d: o::Dims, same: bool) -> ((usize, usize), (usize, usize)) {
    let kmax = |extent: usize| if same { 5 } else { extent.min(5) };
    ((g.int(1, kmax(d[1])), g.int(1, kmax(d[2]))), (g.int(1, 3), g.int(1, 3)))
}

fn qparams(lo: f32, hi: f32) -> QuantParams {
    QuantParams::from_range(lo.min(0.0), hi.max(0.0))
}

fn float_range(v: &[f32]) -> (f32, f32) {
    v.iter().fold((0.0f32, 0.0f32), |(l, h), &x| (l.min(x), h.max(x)))
}

/// Runs `cases` random shapes per kernel family against every kernel set.
pub fn run(cases: usize, seed: u64) -> SuiteStats {
    let mut st = SuiteStats::default();
    let mut g = Gen::new(seed);
    let floats = float_sets();
    let quants = quant_sets();
    for case in 0..cases {
        let ctx = format!("case {case}");

        // conv2d
        let same = g.flag();
        let mut xd = input(&mut g);
        let ((kh, kw), stride) = window(&mut g, xd, same);
        let cout = g.int(1, 8);
        let relu = g.flag();
        let x = g.vals(xd.iter().product(), -1.0, 1.0);
        let w = g.vals(kh * kw * xd[3] * cout, -1.0, 1.0);
        let b = g.vals(cout, -0.5, 0.5);
        let (want, od) = o::conv2d(&x, xd, &w, (kh, kw, xd[3], cout), &b, stride, same, relu);
        let xt = Tensor::from_f32(xd, x.clone()).unwrap();
        let wt = Tensor::from_f32([kh, kw, xd[3], cout], w.clone()).unwrap();
        let attrs = ConvAttrs::new(stride, padding(same)).with_activation(act(relu));
        for (name, k) in &floats {
            let got = k.conv2d(&xt, &wt, &b, &attrs).unwrap();
            assert_eq!(got.shape(), od);
            st.float("conv2d", &format!("{ctx} {name}"), &got, &want);
        }

        // depthwise
        let same = g.flag();
        xd = input(&mut g);
        let ((kh, kw), stride) = window(&mut g, xd, same);
        let relu = g.flag();
        let x = g.vals(xd.iter().product(), -1.0, 1.0);
        let w = g.vals(kh * kw * xd[3], -1.0, 1.0);
        let b = g.vals(xd[3], -0.5, 0.5);
        let (want, _) = o::depthwise(&x, xd, &w, (kh, kw), &b, stride, same, relu);
        let xt = Tensor::from_f32(xd, x).unwrap();
        let wt = Tensor::from_f32([kh, kw, xd[3], 1], w).unwrap();
        let attrs = ConvAttrs::new(stride, padding(same)).with_activation(act(relu));
        for (name, k) in &floats {
            let got = k.depthwise_conv2d(&xt, &wt, &b, &attrs).unwrap();
            st.float("depthwise_conv2d", &format!("{ctx} {name}"), &got, &want);
        }

        // fully connected
        let (batch, h, wd, c) = (g.int(1, 2), g.int(1, 4), g.int(1, 4), g.int(1, 8));
        let rows = h * wd * c;
        let cols = g.int(1, 16);
        let x = g.vals(batch * rows, -1.0, 1.0);
        let w = g.vals(rows * cols, -1.0, 1.0);
        let b = g.vals(cols, -0.5, 0.5);
        let want = o::fully_connected(&x, batch, &w, rows, cols, &b);
        let xt = Tensor::from_f32([batch, h, wd, c], x).unwrap();
        let wt = Tensor::from_f32([1, 1, rows, cols], w).unwrap();
        for (name, k) in &floats {
            let got = k.fully_connected(&xt, &wt, &b, Activation::None).unwrap();
            st.float("fully_connected", &format!("{ctx} {name}"), &got, &want);
        }

        // pool
        let same = g.flag();
        xd = input(&mut g);
        let (win, stride) = window(&mut g, xd, same);
        let max = g.flag();
        let x = g.vals(xd.iter().product(), -2.0, 2.0);
        let (want, _) = o::pool(&x, xd, max, win, stride, same);
        let xt = Tensor::from_f32(xd, x).unwrap();
        let kind = if max { PoolKind::Max } else { PoolKind::Avg };
        let attrs = PoolAttrs { kind, window: win, stride, padding: padding(same) };
        for (name, k) in &floats {
            st.float("pool", &format!("{ctx} {name}"), &k.pool(&xt, &attrs).unwrap(), &want);
        }

        // resize
        xd = input(&mut g);
        let (oh, ow) = (g.int(1, 16), g.int(1, 16));
        let x = g.vals(xd.iter().product(), -1.0, 1.0);
        let want = o::resize(&x, xd, oh, ow);
        let xt = Tensor::from_f32(xd, x).unwrap();
        for (name, k) in &floats {
            st.float("resize_bilinear", &format!("{ctx} {name}"), &k.resize_bilinear(&xt, oh, ow).unwrap(), &want);
        }

        // elementwise family
        xd = input(&mut g);
        let n: usize = xd.iter().product();
        let (a, bv) = (g.vals(n, -3.0, 3.0), g.vals(n, -3.0, 3.0));
        let c2 = g.int(1, 8);
        let extra = g.vals(xd[0] * xd[1] * xd[2] * c2, -3.0, 3.0);
        let (at, bt) = (Tensor::from_f32(xd, a.clone()).unwrap(), Tensor::from_f32(xd, bv.clone()).unwrap());
        let et = Tensor::from_f32([xd[0], xd[1], xd[2], c2], extra.clone()).unwrap();
        let sum: Vec<f32> = a.iter().zip(&bv).map(|(p, q)| p + q).collect();
        let relu_a: Vec<f32> = a.iter().map(|&v| o::relu(v)).collect();
        let cat = o::concat(&[(&a, xd[3]), (&extra, c2)], xd[0] * xd[1] * xd[2]);
        let soft = o::softmax(&a, xd[3]);
        for (name, k) in &floats {
            let ctx = format!("{ctx} {name}");
            st.float("add", &ctx, &k.add(&at, &bt, Activation::None).unwrap(), &sum);
            st.float("relu", &ctx, &k.relu(&at).unwrap(), &relu_a);
            st.float("concat", &ctx, &k.concat_channels(&[&at, &et]).unwrap(), &cat);
            st.float("softmax", &ctx, &k.softmax(&at).unwrap(), &soft);
        }

        // quantize / dequantize round trip
        let lo = -g.vals(1, 0.1, 4.0)[0];
        let hi = g.vals(1, 0.1, 4.0)[0];
        let qp = qparams(lo, hi);
        let x = g.vals(64, lo, hi);
        let qt = quant::quantize(&Tensor::from_f32([1, 1, 8, 8], x.clone()).unwrap(), qp).unwrap();
        let want: Vec<f32> = x
            .iter()
            .map(|&v| {
                o::dequantize(
                    o::quantize(v, qp.scale(), i32::from(qp.zero_point())),
                    qp.scale(),
                    i32::from(qp.zero_point()),
                )
            })
            .collect();
        st.record("quantize");
        let back = quant::dequantize(&qt).unwrap();
        let back = back.as_f32().unwrap();
        if back != want.as_slice() || o::worst_abs(back, &x) > f64::from(qp.scale()) / 2.0 + 1e-6 {
            st.failures.push(format!("quantize {ctx}: round trip off"));
        }

        // int8 convolutions against the float pipeline
        for depthwise in [false, true] {
            let same = g.flag();
            let xd = input(&mut g);
            let ((kh, kw), stride) = window(&mut g, xd, same);
            let cout = if depthwise { xd[3] } else { g.int(1, 8) };
            let relu = g.flag();
            let in_qp = qparams(-g.vals(1, 0.1, 2.0)[0], g.vals(1, 0.1, 2.0)[0]);
            let xq: Vec<i8> = (0..xd.iter().product::<usize>()).map(|_| (g.0.next_u64() & 0xff) as u8 as i8).collect();
            let wn = kh * kw * if depthwise { xd[3] } else { xd[3] * cout };
            let wf = g.vals(wn, -0.5, 0.5);
            let (wl, wh) = float_range(&wf);
            let w_qp = qparams(wl, wh);
            let wq: Vec<i8> = wf.iter().map(|&v| o::quantize(v, w_qp.scale(), i32::from(w_qp.zero_point()))).collect();
            let bias_scale = f64::from(in_qp.scale()) * f64::from(w_qp.scale());
            let bq: Vec<i32> =
                g.vals(cout, -0.3, 0.3).iter().map(|&v| (f64::from(v) / bias_scale).round() as i32).collect();

            let deq = |v: &[i8], qp: QuantParams| -> Vec<f32> {
                v.iter().map(|&q| o::dequantize(q, qp.scale(), i32::from(qp.zero_point()))).collect()
            };
            let (xr, wr) = (deq(&xq, in_qp), deq(&wq, w_qp));
            let br: Vec<f32> = bq.iter().map(|&q| (f64::from(q) * bias_scale) as f32).collect();
            let (want, _) = if depthwise {
                o::depthwise(&xr, xd, &wr, (kh, kw), &br, stride, same, relu)
            } else {
                o::conv2d(&xr, xd, &wr, (kh, kw, xd[3], cout), &br, stride, same, relu)
            };
            let (ol, oh) = float_range(&want);
            let out_qp = qparams(ol, oh);
            let xt = Tensor::from_i8(xd, xq, in_qp).unwrap();
            let wshape = if depthwise { [kh, kw, xd[3], 1] } else { [kh, kw, xd[3], cout] };
            let wt = Tensor::from_i8(wshape, wq, w_qp).unwrap();
            let attrs = ConvAttrs::new(stride, padding(same)).with_activation(act(relu));
            for (name, k) in &quants {
                let got = if depthwise {
                    k.qdepthwise_conv2d(&xt, &wt, &bq, &attrs, out_qp).unwrap()
                } else {
                    k.qconv2d(&xt, &wt, &bq, &attrs, out_qp).unwrap()
                };
                let kernel = if depthwise { "qdepthwise_conv2d" } else { "qconv2d" };
                st.quant(kernel, &format!("{ctx} {name}"), &got, &want, out_qp.scale());
            }
        }
    }
    st
}
