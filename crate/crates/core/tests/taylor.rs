mod common;

use common::{naive_taylor, random_sequence, rng};
use ndarray::Array4;
use proptest::prelude::*;
use rand::Rng;
use skelact_core::data::SkeletonSequence;
use skelact_core::taylor::{motion_magnitude, taylor_transform, TaylorConfig, TaylorMode};

fn cfg(block: usize, step: usize, order: usize) -> TaylorConfig {
    TaylorConfig {
        block_frames: block,
        step,
        order,
        mode: TaylorMode::Replace,
    }
}

fn max_abs_diff(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn matches_loop_reference_on_random_sequences() {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for seed in 0..150u64 {
        let t = r.random_range(4..=12);
        let block = r.random_range(2..=4);
        let order = r.random_range(1..=2usize).min(block - 1);
        let step = r.random_range(1..=2);
        let seq = random_sequence(t, seed);
        let got = taylor_transform(&seq, &cfg(block, step, order)).unwrap();
        worst = worst.max(max_abs_diff(&got.frames, &naive_taylor(&seq, block, step, order)));
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn concat_mode_splits_into_anchor_and_displacement() {
    let seq = random_sequence(10, 5);
    let c = TaylorConfig {
        mode: TaylorMode::Concat,
        order: 2,
        ..TaylorConfig::default()
    };
    let cat = taylor_transform(&seq, &c).unwrap();
    let rep = taylor_transform(&seq, &TaylorConfig { mode: TaylorMode::Replace, ..c }).unwrap();
    for ((t, b, j, ch), &v) in rep.frames.indexed_iter() {
        let sum = cat.frames[[t, b, j, ch]] + cat.frames[[t, b, j, ch + 3]];
        assert!((sum - v).abs() < 1e-12);
        assert_eq!(cat.frames[[t, b, j, ch]], seq.frames[[t, b, j, ch]]);
    }
}

#[test]
fn metadata_is_preserved() {
    let mut seq = random_sequence(9, 1);
    seq.label = 17;
    seq.subject_id = 4;
    let out = taylor_transform(&seq, &TaylorConfig::default()).unwrap();
    assert_eq!((out.label, out.subject_id, out.source_id.as_str()), (17, 4, "random-1"));
}

#[test]
fn too_short_sequence_is_rejected() {
    assert!(taylor_transform(&random_sequence(3, 1), &TaylorConfig::default()).is_err());
}

fn combine(a: &SkeletonSequence, b: &SkeletonSequence, alpha: f64, beta: f64) -> SkeletonSequence {
    a.with_frames(&a.frames * alpha + &b.frames * beta)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transform_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, t in 5usize..12) {
        let x = random_sequence(t, seed);
        let y = random_sequence(t, seed ^ 0xabc);
        let c = cfg(4, 1, 2);
        let lhs = taylor_transform(&combine(&x, &y, alpha, beta), &c).unwrap();
        let tx = taylor_transform(&x, &c).unwrap();
        let ty = taylor_transform(&y, &c).unwrap();
        let rhs = &tx.frames * alpha + &ty.frames * beta;
        prop_assert!(max_abs_diff(&lhs.frames, &rhs) < 1e-12);
    }

    #[test]
    fn translation_shifts_output_and_keeps_motion(seed in any::<u64>(), dx in -5.0f64..5.0, dy in -5.0f64..5.0, dz in -5.0f64..5.0) {
        let x = random_sequence(8, seed);
        let mut moved = x.frames.clone();
        for ((_, _, _, ch), v) in moved.indexed_iter_mut() {
            *v += [dx, dy, dz][ch];
        }
        let moved = x.with_frames(moved);
        let c = TaylorConfig::default();
        let a = taylor_transform(&x, &c).unwrap();
        let b = taylor_transform(&moved, &c).unwrap();
        for ((t, bd, j, ch), &v) in a.frames.indexed_iter() {
            prop_assert!((b.frames[[t, bd, j, ch]] - v - [dx, dy, dz][ch]).abs() < 1e-12);
        }
        let cc = TaylorConfig { mode: TaylorMode::Concat, ..c };
        let ca = taylor_transform(&x, &cc).unwrap();
        let cb = taylor_transform(&moved, &cc).unwrap();
        for ((t, bd, j, ch), &v) in ca.frames.indexed_iter() {
            let shift = if ch < 3 { [dx, dy, dz][ch] } else { 0.0 };
            prop_assert!((cb.frames[[t, bd, j, ch]] - v - shift).abs() < 1e-12);
        }
        let ma = motion_magnitude(&x, &c).unwrap();
        let mb = motion_magnitude(&moved, &c).unwrap();
        for (p, q) in ma.magnitudes.iter().zip(mb.magnitudes.iter()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn output_length_follows_formula(t in 4usize..40, block in 2usize..6, step in 1usize..4) {
        prop_assume!(t >= block);
        let out = taylor_transform(&random_sequence(t, 0), &cfg(block, step, 1)).unwrap();
        prop_assert_eq!(out.num_frames(), (t - block) / step + 1);
    }
}
