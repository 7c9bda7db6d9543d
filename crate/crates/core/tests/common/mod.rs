#![allow(dead_code)]

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelact_core::data::SkeletonSequence;
use skelact_core::models::{HyperformerConfig, StgcnConfig};
use skelact_core::numerics::{check_gradients, Tape, Tensor, Var, DEFAULT_EPS};
use skelact_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Two-layer ST-GCN small enough for element-wise gradient checks.
pub fn micro_stgcn(num_classes: usize) -> StgcnConfig {
    StgcnConfig {
        layer_channels: vec![4, 6],
        temporal_kernel: 9,
        stride_layers: [2].into_iter().collect(),
        dropout_p: 0.0,
        residual: true,
        num_classes,
        in_channels: 3,
    }
}

pub fn micro_hyperformer(num_classes: usize, frames: usize) -> HyperformerConfig {
    HyperformerConfig {
        num_layers: 2,
        hidden_channels: 6,
        num_heads: 2,
        target_frames: frames,
        temporal_kernel: 9,
        num_classes,
        in_channels: 3,
    }
}

pub fn random_sequence(frames: usize, seed: u64) -> SkeletonSequence {
    let mut r = rng(seed);
    let data = Array4::from_shape_fn((frames, 2, 25, 3), |_| r.random_range(-1.0..1.0));
    SkeletonSequence {
        frames: data,
        label: 0,
        subject_id: 1,
        camera_id: 1,
        setup_id: 1,
        source_id: format!("random-{seed}"),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Reference Taylor transform written as explicit loops. The order-n
/// difference at frame u is Σ_k (−1)^(n−k) C(n,k) x[u+k], so nothing is
/// shared with the library's iterated differencing.
pub fn naive_taylor(seq: &SkeletonSequence, block: usize, step: usize, order: usize) -> Array4<f64> {
    let x = &seq.frames;
    let (t, m, v, c) = x.dim();
    let out_len = (t - block) / step + 1;
    let mut out = Array4::zeros((out_len, m, v, c));
    for k in 0..out_len {
        let start = k * step;
        for b in 0..m {
            for j in 0..v {
                for ch in 0..c {
                    let mut y = x[[start, b, j, ch]];
                    let mut factorial = 1.0;
                    for n in 1..=order {
                        factorial *= n as f64;
                        let mut total = 0.0;
                        for i in 0..block - n {
                            let u = start + i;
                            let d: f64 = (0..=n)
                                .map(|kk| {
                                    let sign = if (n - kk) % 2 == 0 { 1.0 } else { -1.0 };
                                    sign * binomial(n, kk) * x[[u + kk, b, j, ch]]
                                })
                                .sum();
                            total += d;
                        }
                        y += total / (block - n) as f64 / factorial;
                    }
                    out[[k, b, j, ch]] = y;
                }
            }
        }
    }
    out
}

/// Contracts an op's output with a fixed random tensor so every output entry
/// reaches the scalar loss with a distinct weight.
fn probe(tape: &Tape, y: &Var, seed: u64) -> Result<Var> {
    let r = tape.constant(random_tensor(y.shape(), seed ^ 0x5eed));
    let prod = tape.mul(y, &r)?;
    Ok(tape.sum(&prod))
}

fn check<F>(inputs: &[Tensor], seed: u64, op: F) -> f64
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    check_gradients(
        |tape, vars| {
            let y = op(tape, vars)?;
            probe(tape, &y, seed)
        },
        inputs,
        DEFAULT_EPS,
    )
    .unwrap()
    .max_rel_error
}

/// Random values bounded away from zero so relu kinks stay outside ±eps.
pub fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = r.random_range(0.1..1.0);
            if r.random_bool(0.5) { mag } else { -mag }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub const GRAD_TOL: f64 = 1e-4;

pub fn dims(seed: u64) -> (usize, usize, usize) {
    let mut r = rng(seed);
    (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5))
}

/// Worst relative gradient error per op over `seeds`.
pub fn op_gradient_errors(seeds: std::ops::Range<u64>) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| {
        match worst.iter_mut().find(|(n, _)| *n == name) {
            Some(entry) => entry.1 = entry.1.max(err),
            None => worst.push((name, err)),
        }
    };
    for seed in seeds {
        let (a, b, c) = dims(seed);
        let s = seed * 31;
        record("matmul", check(&[random_tensor(&[a, b, c], s), random_tensor(&[c, 3], s + 1)], s, |t, v| t.matmul(&v[0], &v[1])));
        record("bmm", check(&[random_tensor(&[a, b, c], s), random_tensor(&[a, c, 2], s + 1)], s, |t, v| t.bmm(&v[0], &v[1])));
        record("bmm_shared", check(&[random_tensor(&[b, c], s), random_tensor(&[a, c, 2], s + 1)], s, |t, v| t.bmm(&v[0], &v[1])));
        record("transpose", check(&[random_tensor(&[a, b, c], s)], s, |t, v| t.transpose_last2(&v[0])));
        record("add", check(&[random_tensor(&[a, b], s), random_tensor(&[a, b], s + 1)], s, |t, v| t.add(&v[0], &v[1])));
        record("add_trailing", check(&[random_tensor(&[a, b, c], s), random_tensor(&[b, c], s + 1)], s, |t, v| t.add_trailing(&v[0], &v[1])));
        record("mul", check(&[random_tensor(&[a, b], s), random_tensor(&[a, b], s + 1)], s, |t, v| t.mul(&v[0], &v[1])));
        record("scale", check(&[random_tensor(&[a, b], s)], s, |t, v| Ok(t.scale(&v[0], -1.7))));
        record("relu", check(&[away_from_zero(&[a, b, c], s)], s, |t, v| Ok(t.relu(&v[0]))));
        record("softmax", check(&[random_tensor(&[a, b + 1], s)], s, |t, v| t.softmax(&v[0])));
        record("mean_axis1", check(&[random_tensor(&[a, b, c], s)], s, |t, v| t.mean_axis1(&v[0])));
        record("sum", check(&[random_tensor(&[a, b], s)], s, |t, v| Ok(t.sum(&v[0]))));
        record("reshape", check(&[random_tensor(&[a, b, c], s)], s, |t, v| t.reshape(&v[0], &[a * b, c])));
        record("concat_last", check(&[random_tensor(&[a, b], s), random_tensor(&[a, c], s + 1)], s, |t, v| t.concat_last(v)));
        let idx: Vec<usize> = (0..5).map(|i| (i * 7 + seed as usize) % a).collect();
        record("gather_rows", check(&[random_tensor(&[a, b], s)], s, move |t, v| t.gather_rows(&v[0], &idx)));
        let stride = 1 + (seed as usize % 2);
        let k = [1, 3, 5, 9][seed as usize % 4];
        record("temporal_conv", check(&[random_tensor(&[a, 5 + b, 2, c], s), random_tensor(&[k, c, 2], s + 1)], s, move |t, v| t.temporal_conv(&v[0], &v[1], stride)));
        let rows = 2 + a;
        record("batch_norm", check(&[random_tensor(&[rows, b, c], s), random_tensor(&[c], s + 1), random_tensor(&[c], s + 2)], s, |t, v| Ok(t.batch_norm(&v[0], &v[1], &v[2], None)?.0)));
        let mean = vec![0.3; c];
        let var = vec![1.7; c];
        record("batch_norm_eval", check(&[random_tensor(&[rows, c], s), random_tensor(&[c], s + 1), random_tensor(&[c], s + 2)], s, move |t, v| Ok(t.batch_norm(&v[0], &v[1], &v[2], Some((&mean, &var)))?.0)));
        let mask = Tensor::new(vec![a, b], (0..a * b).map(|i| if (i + seed as usize).is_multiple_of(3) { 0.0 } else { 2.0 }).collect()).unwrap();
        record("dropout_mask", check(&[random_tensor(&[a, b], s)], s, move |t, v| t.apply_mask(&v[0], mask.clone())));
        let targets: Vec<usize> = (0..a).map(|i| (i + seed as usize) % (b + 1)).collect();
        let ce = check_gradients(|t, v| t.cross_entropy(&v[0], &targets), &[random_tensor(&[a, b + 1], s)], DEFAULT_EPS).unwrap();
        record("cross_entropy", ce.max_rel_error);
    }
    worst
}
