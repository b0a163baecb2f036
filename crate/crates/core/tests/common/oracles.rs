//! Naive-loop oracles written against plain slices, independent of the
//! crate's kernels, geometry helpers and padding code.
#![allow(dead_code)]

use inferbench_core::rng::SplitMix64;

/// NHWC extents.
pub type Dims = [usize; 4];

pub fn idx(d: Dims, b: usize, y: usize, x: usize, c: usize) -> usize {
    ((b * d[1] + y) * d[2] + x) * d[3] + c
}

/// Output extent and leading pad for TF-style padding.
pub fn axis(input: usize, k: usize, stride: usize, same: bool) -> (usize, isize) {
    if same {
        let out = input.div_ceil(stride);
        let total = ((out - 1) * stride + k).saturating_sub(input);
        (out, (total / 2) as isize)
    } else {
        ((input - k) / stride + 1, 0)
    }
}

pub fn relu(v: f32) -> f32 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

/// Six nested loops (batch, oy, ox, co, ky, kx, ci), f32 accumulation,
/// bias added last.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f32],
    xd: Dims,
    w: &[f32],
    (kh, kw, cin, cout): (usize, usize, usize, usize),
    bias: &[f32],
    stride: (usize, usize),
    same: bool,
    with_relu: bool,
) -> (Vec<f32>, Dims) {
    assert_eq!(xd[3], cin);
    let (oh, pt) = axis(xd[1], kh, stride.0, same);
    let (ow, pl) = axis(xd[2], kw, stride.1, same);
    let od = [xd[0], oh, ow, cout];
    let mut out = vec![0.0f32; od.iter().product()];
    for b in 0..xd[0] {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = 0.0f32;
                    for ky in 0..kh {
                        let iy = (oy * stride.0 + ky) as isize - pt;
                        if iy < 0 || iy >= xd[1] as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride.1 + kx) as isize - pl;
                            if ix < 0 || ix >= xd[2] as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv = x[idx(xd, b, iy as usize, ix as usize, ci)];
                                let wv = w[((ky * kw + kx) * cin + ci) * cout + co];
                                acc += xv * wv;
                            }
                        }
                    }
                    let v = acc + bias[co];
                    out[idx(od, b, oy, ox, co)] = if with_relu { relu(v) } else { v };
                }
            }
        }
    }
    (out, od)
}

/// Depthwise convolution as one single-channel [`conv2d`] per channel.
#[allow(clippy::too_many_arguments)]
pub fn depthwise(
    x: &[f32],
    xd: Dims,
    w: &[f32],
    (kh, kw): (usize, usize),
    bias: &[f32],
    stride: (usize, usize),
    same: bool,
    with_relu: bool,
) -> (Vec<f32>, Dims) {
    let c = xd[3];
    let mut out = Vec::new();
    let mut od = [0; 4];
    for ch in 0..c {
        let plane: Vec<f32> = x.iter().skip(ch).step_by(c).copied().collect();
        let taps: Vec<f32> = w.iter().skip(ch).step_by(c).copied().collect();
        let (y, d) =
            conv2d(&plane, [xd[0], xd[1], xd[2], 1], &taps, (kh, kw, 1, 1), &bias[ch..=ch], stride, same, with_relu);
        if out.is_empty() {
            od = [d[0], d[1], d[2], c];
            out = vec![0.0; od.iter().product()];
        }
        for (i, v) in y.into_iter().enumerate() {
            out[i * c + ch] = v;
        }
    }
    (out, od)
}

/// Double loop over a row-major `rows x cols` matrix.
pub fn fully_connected(x: &[f32], batch: usize, w: &[f32], rows: usize, cols: usize, bias: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; batch * cols];
    for b in 0..batch {
        for j in 0..cols {
            let mut acc = 0.0f32;
            for i in 0..rows {
                acc += x[b * rows + i] * w[i * cols + j];
            }
            out[b * cols + j] = acc + bias[j];
        }
    }
    out
}

pub fn pool(
    x: &[f32],
    xd: Dims,
    max: bool,
    window: (usize, usize),
    stride: (usize, usize),
    same: bool,
) -> (Vec<f32>, Dims) {
    let (oh, pt) = axis(xd[1], window.0, stride.0, same);
    let (ow, pl) = axis(xd[2], window.1, stride.1, same);
    let od = [xd[0], oh, ow, xd[3]];
    let mut out = vec![0.0f32; od.iter().product()];
    for b in 0..xd[0] {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..xd[3] {
                    let mut vals = Vec::new();
                    for ky in 0..window.0 {
                        for kx in 0..window.1 {
                            let iy = (oy * stride.0 + ky) as isize - pt;
                            let ix = (ox * stride.1 + kx) as isize - pl;
                            if (0..xd[1] as isize).contains(&iy) && (0..xd[2] as isize).contains(&ix) {
                                vals.push(x[idx(xd, b, iy as usize, ix as usize, c)]);
                            }
                        }
                    }
                    out[idx(od, b, oy, ox, c)] = if max {
                        vals.iter().copied().fold(f32::MIN, f32::max)
                    } else {
                        vals.iter().sum::<f32>() / vals.len() as f32
                    };
                }
            }
        }
    }
    (out, od)
}

/// Half-pixel bilinear sampling in f64 with explicit corner weights.
pub fn resize(x: &[f32], xd: Dims, oh: usize, ow: usize) -> Vec<f32> {
    let src = |o: usize, inn: usize, out: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * inn as f64 / out as f64 - 0.5).max(0.0);
        let lo = (s.floor() as usize).min(inn - 1);
        let hi = (lo + 1).min(inn - 1);
        (lo, hi, (s - lo as f64).min(1.0))
    };
    let od = [xd[0], oh, ow, xd[3]];
    let mut out = vec![0.0f32; od.iter().product()];
    for b in 0..xd[0] {
        for oy in 0..oh {
            let (y0, y1, fy) = src(oy, xd[1], oh);
            for ox in 0..ow {
                let (x0, x1, fx) = src(ox, xd[2], ow);
                for c in 0..xd[3] {
                    let p = |y, xx| f64::from(x[idx(xd, b, y, xx, c)]);
                    let v = p(y0, x0) * (1.0 - fy) * (1.0 - fx)
                        + p(y0, x1) * (1.0 - fy) * fx
                        + p(y1, x0) * fy * (1.0 - fx)
                        + p(y1, x1) * fy * fx;
                    out[idx(od, b, oy, ox, c)] = v as f32;
                }
            }
        }
    }
    out
}

pub fn softmax(x: &[f32], c: usize) -> Vec<f32> {
    x.chunks(c)
        .flat_map(|row| {
            let m = row.iter().copied().fold(f32::MIN, f32::max);
            let e: Vec<f64> = row.iter().map(|&v| (f64::from(v) - f64::from(m)).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(move |v| (v / s) as f32)
        })
        .collect()
}

pub fn concat(parts: &[(&[f32], usize)], pixels: usize) -> Vec<f32> {
    let mut out = Vec::new();
    for p in 0..pixels {
        for &(data, c) in parts {
            out.extend_from_slice(&data[p * c..(p + 1) * c]);
        }
    }
    out
}

pub fn quantize(x: f32, scale: f32, zp: i32) -> i8 {
    let q = (f64::from(x) / f64::from(scale)).round() as i64 + i64::from(zp);
    q.clamp(-128, 127) as i8
}

pub fn dequantize(q: i8, scale: f32, zp: i32) -> f32 {
    scale * (i32::from(q) - zp) as f32
}

/// Element-wise `|a - b| <= rel * max(|b|, 1)`; returns the worst ratio.
pub fn worst_relative(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&p, &q)| f64::from((p - q).abs()) / f64::from(q.abs()).max(1.0)).fold(0.0, f64::max)
}

pub fn worst_abs(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&p, &q)| f64::from((p - q).abs())).fold(0.0, f64::max)
}

pub struct Gen(pub SplitMix64);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::new(seed))
    }

    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn flag(&mut self) -> bool {
        self.0.next_u64() & 1 == 1
    }

    pub fn vals(&mut self, n: usize, lo: f32, hi: f32) -> Vec<f32> {
        (0..n).map(|_| lo + (hi - lo) * self.0.next_unit()).collect()
    }
}
