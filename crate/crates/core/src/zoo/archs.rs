//! Architecture definitions.
//!
//! Every convolution carries a bias; batch normalisation is folded away.
//! Layer tables (parameters at any resolution):
//!
//! | net                     | params     |
//! |-------------------------|------------|
//! | MobileNet-V1 1.0        | 4,222,057  |
//! | Inception-V3 + aux head | 27,145,970 |
//! | Inception-ResNet-V1     | 22,671,152 |
//! | SRCNN 9-5-5             | 69,251     |
//! | VDSR, 19 layers         | 631,299    |
//! | SRGAN generator         | 1,444,163  |
//! | ICNet-style pyramid     | 6,709,395  |
//! | DPED                    | 400,451    |

use alloc::format;
use alloc::string::String;

use super::builder::Builder;
use crate::graph::{GraphError, GraphSpec};
use crate::kernels::{Activation, Padding, PoolKind};

const NONE: Activation = Activation::None;
const RELU: Activation = Activation::Relu;
const SAME: Padding = Padding::Same;
const VALID: Padding = Padding::Valid;

type Res = (usize, usize);

fn input_shape((h, w): Res) -> [usize; 4] {
    [1, h, w, 3]
}

pub fn mobilenet_v1(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let mut b = Builder::new("mobilenet_v1", input_shape(res), seed);
    let mut x = b.conv_relu("conv0", "input", 32, 3, 2);
    let stack = [
        (64, 1),
        (128, 2),
        (128, 1),
        (256, 2),
        (256, 1),
        (512, 2),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (1024, 2),
        (1024, 1),
    ];
    for (i, (filters, stride)) in stack.into_iter().enumerate() {
        let dw = b.depthwise(&format!("block{}/dw", i + 1), &x, 3, stride, RELU);
        x = b.conv_relu(&format!("block{}/pw", i + 1), &dw, filters, 1, 1);
    }
    let pooled = b.global_avg_pool("avg_pool", &x);
    let logits = b.fully_connected("logits", &pooled, 1001, NONE);
    let out = b.softmax("predictions", &logits);
    b.finish(&out)
}

/// Stem shared by both Inception variants, ending at 192 channels.
fn inception_stem(b: &mut Builder) -> String {
    let x = b.conv("stem/conv1", "input", 32, (3, 3), 2, VALID, RELU);
    let x = b.conv("stem/conv2", &x, 32, (3, 3), 1, VALID, RELU);
    let x = b.conv("stem/conv3", &x, 64, (3, 3), 1, SAME, RELU);
    let x = b.pool("stem/pool1", &x, PoolKind::Max, 3, 2, VALID);
    let x = b.conv("stem/conv4", &x, 80, (1, 1), 1, VALID, RELU);
    b.conv("stem/conv5", &x, 192, (3, 3), 1, VALID, RELU)
}

fn pw(b: &mut Builder, id: &str, x: &str, filters: usize) -> String {
    b.conv(id, x, filters, (1, 1), 1, SAME, RELU)
}

fn conv_k(b: &mut Builder, id: &str, x: &str, filters: usize, k: (usize, usize)) -> String {
    b.conv(id, x, filters, k, 1, SAME, RELU)
}

fn reduce(b: &mut Builder, id: &str, x: &str, filters: usize) -> String {
    b.conv(id, x, filters, (3, 3), 2, VALID, RELU)
}

fn avg_branch(b: &mut Builder, p: &str, x: &str, filters: usize) -> String {
    let pool = b.pool(&format!("{p}/b3_pool"), x, PoolKind::Avg, 3, 1, SAME);
    pw(b, &format!("{p}/b3_1x1"), &pool, filters)
}

pub fn inception_v3(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let mut b = Builder::new("inception_v3", input_shape(res), seed);
    let x = inception_stem(&mut b);
    let mut x = b.pool("stem/pool2", &x, PoolKind::Max, 3, 2, VALID);

    for (p, pool_proj) in [("mixed_5b", 32), ("mixed_5c", 64), ("mixed_5d", 64)] {
        let b0 = pw(&mut b, &format!("{p}/b0"), &x, 64);
        let b1 = pw(&mut b, &format!("{p}/b1_1x1"), &x, 48);
        let b1 = conv_k(&mut b, &format!("{p}/b1_5x5"), &b1, 64, (5, 5));
        let b2 = pw(&mut b, &format!("{p}/b2_1x1"), &x, 64);
        let b2 = conv_k(&mut b, &format!("{p}/b2_3x3a"), &b2, 96, (3, 3));
        let b2 = conv_k(&mut b, &format!("{p}/b2_3x3b"), &b2, 96, (3, 3));
        let b3 = avg_branch(&mut b, p, &x, pool_proj);
        x = b.concat(&format!("{p}/concat"), &[&b0, &b1, &b2, &b3]);
    }

    let b0 = reduce(&mut b, "mixed_6a/b0", &x, 384);
    let b1 = pw(&mut b, "mixed_6a/b1_1x1", &x, 64);
    let b1 = conv_k(&mut b, "mixed_6a/b1_3x3", &b1, 96, (3, 3));
    let b1 = reduce(&mut b, "mixed_6a/b1_reduce", &b1, 96);
    let b2 = b.pool("mixed_6a/b2_pool", &x, PoolKind::Max, 3, 2, VALID);
    x = b.concat("mixed_6a/concat", &[&b0, &b1, &b2]);

    for (p, m) in [("mixed_6b", 128), ("mixed_6c", 160), ("mixed_6d", 160), ("mixed_6e", 192)] {
        let b0 = pw(&mut b, &format!("{p}/b0"), &x, 192);
        let b1 = pw(&mut b, &format!("{p}/b1_1x1"), &x, m);
        let b1 = conv_k(&mut b, &format!("{p}/b1_1x7"), &b1, m, (1, 7));
        let b1 = conv_k(&mut b, &format!("{p}/b1_7x1"), &b1, 192, (7, 1));
        let b2 = pw(&mut b, &format!("{p}/b2_1x1"), &x, m);
        let b2 = conv_k(&mut b, &format!("{p}/b2_7x1a"), &b2, m, (7, 1));
        let b2 = conv_k(&mut b, &format!("{p}/b2_1x7a"), &b2, m, (1, 7));
        let b2 = conv_k(&mut b, &format!("{p}/b2_7x1b"), &b2, m, (7, 1));
        let b2 = conv_k(&mut b, &format!("{p}/b2_1x7b"), &b2, 192, (1, 7));
        let b3 = avg_branch(&mut b, p, &x, 192);
        x = b.concat(&format!("{p}/concat"), &[&b0, &b1, &b2, &b3]);
    }

    // Auxiliary classifier. Small inputs shrink the pool window and pad the
    // 5x5 conv; the trailing global pool is 1x1 at full resolution.
    let [_, h, w, _] = b.shape(&x);
    let aux = b.pool_rect("aux/pool", &x, PoolKind::Avg, (h.min(5), w.min(5)), (3, 3), VALID);
    let aux = pw(&mut b, "aux/conv1", &aux, 128);
    let [_, ah, aw, _] = b.shape(&aux);
    let pad = if ah >= 5 && aw >= 5 { VALID } else { SAME };
    let aux = b.conv("aux/conv2", &aux, 768, (5, 5), 1, pad, RELU);
    let aux = b.global_avg_pool("aux/avg_pool", &aux);
    let aux = b.fully_connected("aux/logits", &aux, 1001, NONE);
    let aux = b.softmax("aux/predictions", &aux);

    let b0 = pw(&mut b, "mixed_7a/b0_1x1", &x, 192);
    let b0 = reduce(&mut b, "mixed_7a/b0_reduce", &b0, 320);
    let b1 = pw(&mut b, "mixed_7a/b1_1x1", &x, 192);
    let b1 = conv_k(&mut b, "mixed_7a/b1_1x7", &b1, 192, (1, 7));
    let b1 = conv_k(&mut b, "mixed_7a/b1_7x1", &b1, 192, (7, 1));
    let b1 = reduce(&mut b, "mixed_7a/b1_reduce", &b1, 192);
    let b2 = b.pool("mixed_7a/b2_pool", &x, PoolKind::Max, 3, 2, VALID);
    x = b.concat("mixed_7a/concat", &[&b0, &b1, &b2]);

    for p in ["mixed_7b", "mixed_7c"] {
        let b0 = pw(&mut b, &format!("{p}/b0"), &x, 320);
        let b1 = pw(&mut b, &format!("{p}/b1_1x1"), &x, 384);
        let b1a = conv_k(&mut b, &format!("{p}/b1_1x3"), &b1, 384, (1, 3));
        let b1b = conv_k(&mut b, &format!("{p}/b1_3x1"), &b1, 384, (3, 1));
        let b2 = pw(&mut b, &format!("{p}/b2_1x1"), &x, 448);
        let b2 = conv_k(&mut b, &format!("{p}/b2_3x3"), &b2, 384, (3, 3));
        let b2a = conv_k(&mut b, &format!("{p}/b2_1x3"), &b2, 384, (1, 3));
        let b2b = conv_k(&mut b, &format!("{p}/b2_3x1"), &b2, 384, (3, 1));
        let b3 = avg_branch(&mut b, p, &x, 192);
        x = b.concat(&format!("{p}/concat"), &[&b0, &b1a, &b1b, &b2a, &b2b, &b3]);
    }

    let pooled = b.global_avg_pool("avg_pool", &x);
    let logits = b.fully_connected("logits", &pooled, 1001, NONE);
    let main = b.softmax("predictions", &logits);
    let out = b.concat("outputs", &[&main, &aux]);
    b.finish(&out)
}

/// Residual unit: parallel branches, concat, linear 1x1 back to the input
/// width, add, relu.
fn residual_unit(b: &mut Builder, p: &str, x: &str, branches: &[String]) -> String {
    let refs: alloc::vec::Vec<&str> = branches.iter().map(String::as_str).collect();
    let mixed = b.concat(&format!("{p}/concat"), &refs);
    let c = b.channels(x);
    let up = b.conv(&format!("{p}/up"), &mixed, c, (1, 1), 1, SAME, NONE);
    b.add(&format!("{p}/add"), x, &up, RELU)
}

pub fn inception_resnet_v1(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let mut b = Builder::new("inception_resnet_v1", input_shape(res), seed);
    let x = inception_stem(&mut b);
    let mut x = reduce(&mut b, "stem/conv6", &x, 256);

    for i in 1..=5 {
        let p = format!("block35_{i}");
        let b0 = pw(&mut b, &format!("{p}/b0"), &x, 32);
        let b1 = pw(&mut b, &format!("{p}/b1_1x1"), &x, 32);
        let b1 = conv_k(&mut b, &format!("{p}/b1_3x3"), &b1, 32, (3, 3));
        let b2 = pw(&mut b, &format!("{p}/b2_1x1"), &x, 32);
        let b2 = conv_k(&mut b, &format!("{p}/b2_3x3a"), &b2, 32, (3, 3));
        let b2 = conv_k(&mut b, &format!("{p}/b2_3x3b"), &b2, 32, (3, 3));
        x = residual_unit(&mut b, &p, &x, &[b0, b1, b2]);
    }

    let b0 = reduce(&mut b, "reduction_a/b0", &x, 384);
    let b1 = pw(&mut b, "reduction_a/b1_1x1", &x, 192);
    let b1 = conv_k(&mut b, "reduction_a/b1_3x3", &b1, 192, (3, 3));
    let b1 = reduce(&mut b, "reduction_a/b1_reduce", &b1, 256);
    let b2 = b.pool("reduction_a/b2_pool", &x, PoolKind::Max, 3, 2, VALID);
    x = b.concat("reduction_a/concat", &[&b0, &b1, &b2]);

    for i in 1..=10 {
        let p = format!("block17_{i}");
        let b0 = pw(&mut b, &format!("{p}/b0"), &x, 128);
        let b1 = pw(&mut b, &format!("{p}/b1_1x1"), &x, 128);
        let b1 = conv_k(&mut b, &format!("{p}/b1_1x7"), &b1, 128, (1, 7));
        let b1 = conv_k(&mut b, &format!("{p}/b1_7x1"), &b1, 128, (7, 1));
        x = residual_unit(&mut b, &p, &x, &[b0, b1]);
    }

    let b0 = pw(&mut b, "reduction_b/b0_1x1", &x, 256);
    let b0 = reduce(&mut b, "reduction_b/b0_reduce", &b0, 384);
    let b1 = pw(&mut b, "reduction_b/b1_1x1", &x, 256);
    let b1 = reduce(&mut b, "reduction_b/b1_reduce", &b1, 256);
    let b2 = pw(&mut b, "reduction_b/b2_1x1", &x, 256);
    let b2 = conv_k(&mut b, "reduction_b/b2_3x3", &b2, 256, (3, 3));
    let b2 = reduce(&mut b, "reduction_b/b2_reduce", &b2, 256);
    let b3 = b.pool("reduction_b/b3_pool", &x, PoolKind::Max, 3, 2, VALID);
    x = b.concat("reduction_b/concat", &[&b0, &b1, &b2, &b3]);

    for i in 1..=5 {
        let p = format!("block8_{i}");
        let b0 = pw(&mut b, &format!("{p}/b0"), &x, 192);
        let b1 = pw(&mut b, &format!("{p}/b1_1x1"), &x, 192);
        let b1 = conv_k(&mut b, &format!("{p}/b1_1x3"), &b1, 192, (1, 3));
        let b1 = conv_k(&mut b, &format!("{p}/b1_3x1"), &b1, 192, (3, 1));
        x = residual_unit(&mut b, &p, &x, &[b0, b1]);
    }

    let pooled = b.global_avg_pool("avg_pool", &x);
    let hidden = b.fully_connected("embedding/hidden", &pooled, 896, RELU);
    let out = b.fully_connected("embedding/out", &hidden, 128, NONE);
    b.finish(&out)
}

pub fn srcnn(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let mut b = Builder::new("srcnn", input_shape(res), seed);
    let x = b.conv_relu("conv1", "input", 64, 9, 1);
    let x = b.conv_relu("conv2", &x, 32, 5, 1);
    let out = b.conv("conv3", &x, 3, (5, 5), 1, SAME, NONE);
    b.finish(&out)
}

pub fn vdsr(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let mut b = Builder::new("vdsr", input_shape(res), seed);
    let mut x = b.conv_relu("conv1", "input", 64, 3, 1);
    for i in 2..=18 {
        x = b.conv_relu(&format!("conv{i}"), &x, 64, 3, 1);
    }
    let residual = b.conv("conv19", &x, 3, (3, 3), 1, SAME, NONE);
    let out = b.add("output", "input", &residual, NONE);
    b.finish(&out)
}

/// Two 3x3 convolutions and a skip connection.
fn res_block(b: &mut Builder, p: &str, x: &str) -> String {
    let c = b.channels(x);
    let y = b.conv_relu(&format!("{p}/conv1"), x, c, 3, 1);
    let y = b.conv(&format!("{p}/conv2"), &y, c, (3, 3), 1, SAME, NONE);
    b.add(&format!("{p}/add"), x, &y, NONE)
}

pub fn srgan_generator(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let (h, w) = res;
    let mut b = Builder::new("srgan_generator", input_shape(res), seed);
    let low = b.resize("downsample", "input", (h / 4, w / 4));
    let head = b.conv_relu("head", &low, 64, 9, 1);
    let mut x = head.clone();
    for i in 1..=16 {
        x = res_block(&mut b, &format!("res{i}"), &x);
    }
    let x = b.conv("body_out", &x, 64, (3, 3), 1, SAME, NONE);
    let x = b.add("body_skip", &head, &x, NONE);
    let x = b.conv_relu("tail/expand", &x, 256, 3, 1);
    let x = b.resize("tail/up1", &x, (h / 2, w / 2));
    let x = b.conv("tail/conv", &x, 3, (9, 9), 1, SAME, NONE);
    let out = b.resize("tail/up2", &x, (h, w));
    b.finish(&out)
}

pub fn icnet(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let (h, w) = res;
    let mut b = Builder::new("icnet", input_shape(res), seed);

    // Full resolution: three strided convs to 1/8.
    let hi = b.conv_relu("high/conv1", "input", 32, 3, 2);
    let hi = b.conv_relu("high/conv2", &hi, 32, 3, 2);
    let hi = b.conv_relu("high/conv3", &hi, 64, 3, 2);

    // Half resolution down to 1/16.
    let mid = b.resize("mid/input", "input", (h.div_ceil(2), w.div_ceil(2)));
    let mid = b.conv_relu("mid/conv1", &mid, 32, 3, 2);
    let mid = b.conv_relu("mid/conv2", &mid, 32, 3, 1);
    let mid = b.conv_relu("mid/conv3", &mid, 64, 3, 1);
    let mid = b.pool("mid/pool", &mid, PoolKind::Max, 3, 2, SAME);
    let mid = b.conv_relu("mid/conv4", &mid, 128, 3, 2);
    let mid = b.conv_relu("mid/conv5", &mid, 256, 3, 1);

    // Quarter resolution down to 1/32.
    let low = b.resize("low/input", "input", (h.div_ceil(4), w.div_ceil(4)));
    let low = b.conv_relu("low/conv1", &low, 32, 3, 2);
    let low = b.conv_relu("low/conv2", &low, 64, 3, 2);
    let low = b.conv_relu("low/conv3", &low, 128, 3, 2);
    let low = b.conv_relu("low/conv4", &low, 256, 3, 1);
    let low = b.conv_relu("low/conv5", &low, 512, 3, 1);
    let low = b.conv_relu("low/conv6", &low, 512, 3, 1);
    let low = b.conv_relu("low/conv7", &low, 384, 3, 1);
    let low = b.conv_relu("low/conv8", &low, 256, 1, 1);

    // Cascade fusion: upsample the coarser map, project both, add.
    let up = b.resize_like("cff1/up", &low, &mid);
    let up = b.conv("cff1/coarse", &up, 128, (3, 3), 1, SAME, NONE);
    let proj = b.conv("cff1/fine", &mid, 128, (1, 1), 1, SAME, NONE);
    let fused = b.add("cff1/add", &up, &proj, RELU);

    let up = b.resize_like("cff2/up", &fused, &hi);
    let up = b.conv("cff2/coarse", &up, 128, (3, 3), 1, SAME, NONE);
    let proj = b.conv("cff2/fine", &hi, 128, (1, 1), 1, SAME, NONE);
    let fused = b.add("cff2/add", &up, &proj, RELU);

    let logits = b.conv("classifier", &fused, 19, (1, 1), 1, SAME, NONE);
    let logits = b.resize("classifier/up", &logits, (h, w));
    let out = b.softmax("predictions", &logits);
    b.finish(&out)
}

pub fn dped(res: Res, seed: u64) -> Result<GraphSpec, GraphError> {
    let mut b = Builder::new("dped", input_shape(res), seed);
    let mut x = b.conv_relu("head", "input", 64, 9, 1);
    for i in 1..=4 {
        x = res_block(&mut b, &format!("res{i}"), &x);
    }
    let x = b.conv_relu("conv1", &x, 64, 3, 1);
    let x = b.conv_relu("conv2", &x, 64, 3, 1);
    let out = b.conv("tail", &x, 3, (9, 9), 1, SAME, NONE);
    b.finish(&out)
}
