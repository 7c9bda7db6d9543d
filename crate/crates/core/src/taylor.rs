//! Taylor-transformed skeletons.
//!
//! A sequence is cut into sliding temporal blocks of `B` frames (stride `s`).
//! Inside each block, the order-`n` forward differences are averaged and the
//! block's first frame is advanced by the truncated Taylor sum
//!
//! ```text
//! y_t = x_t + Σ_{n=1..N} mean(Dⁿ over [t, t+B)) / n!
//! ```
//!
//! With `N = 1` this is the single-term displacement form. Output frame `t`
//! is labeled by the block's first frame, giving `floor((T − B) / s) + 1`
//! frames.

use ndarray::{s, Array3, Array4, ArrayView4, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::data::SkeletonSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaylorMode {
    /// The transformed stream replaces the positions.
    Replace,
    /// Positions are kept and the displacement term is appended as extra channels.
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaylorConfig {
    pub block_frames: usize,
    pub step: usize,
    pub order: usize,
    pub mode: TaylorMode,
}

impl Default for TaylorConfig {
    fn default() -> Self {
        TaylorConfig {
            block_frames: 4,
            step: 1,
            order: 1,
            mode: TaylorMode::Replace,
        }
    }
}

impl TaylorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_frames < 2 {
            return Err(Error::Config(format!(
                "block_frames must be at least 2, got {}",
                self.block_frames
            )));
        }
        if self.step < 1 {
            return Err(Error::Config("step must be at least 1".into()));
        }
        if self.order < 1 || self.order >= self.block_frames {
            return Err(Error::Config(format!(
                "order must lie in [1, {}] for blocks of {} frames, got {}",
                self.block_frames - 1,
                self.block_frames,
                self.order
            )));
        }
        Ok(())
    }

    /// Number of output frames for an input of `frames` frames.
    pub fn output_len(&self, frames: usize) -> Result<usize> {
        if frames < self.block_frames {
            return Err(Error::InsufficientFrames {
                needed: self.block_frames,
                got: frames,
            });
        }
        Ok((frames - self.block_frames) / self.step + 1)
    }
}

/// Order-`n` forward differences along time, `(T − n) × M × V × C`.
pub fn forward_differences(seq: &SkeletonSequence, n: usize) -> Result<Array4<f64>> {
    differences(seq.frames.view(), n)
}

fn differences(frames: ArrayView4<'_, f64>, n: usize) -> Result<Array4<f64>> {
    let t = frames.dim().0;
    if n < 1 {
        return Err(Error::Config("difference order must be at least 1".into()));
    }
    if t <= n {
        return Err(Error::InsufficientFrames { needed: n + 1, got: t });
    }
    let mut current = frames.to_owned();
    for _ in 0..n {
        let len = current.dim().0;
        current = &current.slice(s![1..len, .., .., ..]) - &current.slice(s![0..len - 1, .., .., ..]);
    }
    Ok(current)
}

/// Per-block Taylor displacement `Σ mean(Dⁿ)/n!`, `T′ × M × V × C`.
fn displacement(frames: ArrayView4<'_, f64>, cfg: &TaylorConfig) -> Result<Array4<f64>> {
    cfg.validate()?;
    let (t, m, v, c) = frames.dim();
    let out_len = cfg.output_len(t)?;
    let mut out = Array4::<f64>::zeros((out_len, m, v, c));
    let mut factorial = 1.0;
    for n in 1..=cfg.order {
        factorial *= n as f64;
        let diffs = differences(frames, n)?;
        // Within a block of B frames there are B − n order-n differences.
        let count = cfg.block_frames - n;
        let weight = 1.0 / (count as f64 * factorial);
        for (k, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
            let start = k * cfg.step;
            let block = diffs.slice(s![start..start + count, .., .., ..]);
            let sum = block.sum_axis(Axis(0));
            Zip::from(&mut dst).and(&sum).for_each(|d, &s| *d += s * weight);
        }
    }
    Ok(out)
}

pub fn taylor_transform(seq: &SkeletonSequence, cfg: &TaylorConfig) -> Result<SkeletonSequence> {
    let disp = displacement(seq.frames.view(), cfg)?;
    let (out_len, m, v, c) = disp.dim();
    let anchors = seq
        .frames
        .slice(s![0..(out_len - 1) * cfg.step + 1; cfg.step, .., .., ..]);
    let frames = match cfg.mode {
        TaylorMode::Replace => &anchors + &disp,
        TaylorMode::Concat => {
            let mut out = Array4::<f64>::zeros((out_len, m, v, 2 * c));
            out.slice_mut(s![.., .., .., 0..c]).assign(&anchors);
            out.slice_mut(s![.., .., .., c..]).assign(&disp);
            out
        }
    };
    Ok(seq.with_frames(frames))
}

/// Per-joint motion intensity aligned with the Taylor output frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    /// `T′ × M × V`, non-negative.
    pub magnitudes: Array3<f64>,
    pub source: String,
}

impl MotionField {
    /// Magnitudes of the block covering `frame`, clamped to the last block.
    pub fn at_frame(&self, frame: usize, body: usize) -> Vec<f64> {
        let last = self.magnitudes.dim().0.saturating_sub(1);
        self.magnitudes
            .slice(s![frame.min(last), body, ..])
            .to_vec()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            source: &'a str,
            magnitudes: Vec<Vec<Vec<f64>>>,
        }
        let (t, m, _) = self.magnitudes.dim();
        let magnitudes = (0..t)
            .map(|ti| (0..m).map(|bi| self.magnitudes.slice(s![ti, bi, ..]).to_vec()).collect())
            .collect();
        Ok(serde_json::to_string(&Doc {
            source: &self.source,
            magnitudes,
        })?)
    }
}

/// Euclidean norm, over the spatial channels, of the block-mean first difference.
pub fn motion_magnitude(seq: &SkeletonSequence, cfg: &TaylorConfig) -> Result<MotionField> {
    cfg.validate()?;
    let spatial = seq.channels().min(crate::data::SPATIAL_DIMS);
    let first_order = TaylorConfig { order: 1, ..*cfg };
    let disp = displacement(seq.frames.slice(s![.., .., .., 0..spatial]), &first_order)?;
    let magnitudes = disp.map_axis(Axis(3), |d| d.iter().map(|x| x * x).sum::<f64>().sqrt());
    Ok(MotionField {
        magnitudes,
        source: seq.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NTU_JOINTS;

    fn seq(frames: Array4<f64>) -> SkeletonSequence {
        SkeletonSequence {
            frames,
            label: 0,
            subject_id: 1,
            camera_id: 1,
            setup_id: 1,
            source_id: "t".into(),
        }
    }

    fn track(t: usize, f: impl Fn(f64) -> f64) -> SkeletonSequence {
        let mut frames = Array4::zeros((t, 2, NTU_JOINTS, 3));
        for ti in 0..t {
            frames[[ti, 0, 0, 0]] = f(ti as f64);
        }
        seq(frames)
    }

    fn constant(t: usize) -> SkeletonSequence {
        let mut frames = Array4::zeros((t, 2, NTU_JOINTS, 3));
        for ((_, b, j, c), v) in frames.indexed_iter_mut() {
            *v = 0.1 * (b + 2 * j + 3 * c) as f64 - 1.0;
        }
        seq(frames)
    }

    #[test]
    fn differences_of_constant_are_zero() {
        let d = forward_differences(&constant(6), 1).unwrap();
        assert_eq!(d.dim().0, 5);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn differences_of_linear_track() {
        let s = track(6, |t| t);
        let d1 = forward_differences(&s, 1).unwrap();
        assert!((0..5).all(|t| d1[[t, 0, 0, 0]] == 1.0));
        let d2 = forward_differences(&s, 2).unwrap();
        assert!(d2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_difference_of_square_is_two() {
        // (t+2)² − 2(t+1)² + t² = 2
        let d2 = forward_differences(&track(5, |t| t * t), 2).unwrap();
        assert_eq!(d2.dim().0, 3);
        assert!((0..3).all(|t| d2[[t, 0, 0, 0]] == 2.0));
    }

    #[test]
    fn differences_need_enough_frames() {
        assert!(matches!(
            forward_differences(&track(2, |t| t), 2),
            Err(Error::InsufficientFrames { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn static_pose_is_a_fixed_point() {
        let s = constant(9);
        for (b, st, n) in [(4, 1, 1), (4, 2, 3), (2, 1, 1), (5, 3, 2)] {
            let cfg = TaylorConfig { block_frames: b, step: st, order: n, mode: TaylorMode::Replace };
            let out = taylor_transform(&s, &cfg).unwrap();
            for t in 0..out.num_frames() {
                assert_eq!(out.frames.slice(s![t, .., .., ..]), s.frames.slice(s![0, .., .., ..]));
            }
        }
    }

    #[test]
    fn linear_track_advances_by_one() {
        let out = taylor_transform(&track(8, |t| t), &TaylorConfig::default()).unwrap();
        assert_eq!(out.num_frames(), 5);
        for t in 0..5 {
            assert_eq!(out.frames[[t, 0, 0, 0]], t as f64 + 1.0);
        }
    }

    #[test]
    fn output_length_formula() {
        let out = taylor_transform(&constant(10), &TaylorConfig::default()).unwrap();
        assert_eq!(out.num_frames(), 7);
        let cfg = TaylorConfig { step: 3, ..TaylorConfig::default() };
        assert_eq!(taylor_transform(&constant(10), &cfg).unwrap().num_frames(), 3);
    }

    #[test]
    fn concat_mode_appends_displacement_channels() {
        let cfg = TaylorConfig { mode: TaylorMode::Concat, ..TaylorConfig::default() };
        let out = taylor_transform(&track(8, |t| 2.0 * t), &cfg).unwrap();
        assert_eq!(out.channels(), 6);
        for t in 0..5 {
            assert_eq!(out.frames[[t, 0, 0, 0]], 2.0 * t as f64);
            assert_eq!(out.frames[[t, 0, 0, 3]], 2.0);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let s = constant(8);
        for cfg in [
            TaylorConfig { block_frames: 1, ..TaylorConfig::default() },
            TaylorConfig { step: 0, ..TaylorConfig::default() },
            TaylorConfig { order: 0, ..TaylorConfig::default() },
            TaylorConfig { order: 4, ..TaylorConfig::default() },
        ] {
            assert!(matches!(taylor_transform(&s, &cfg), Err(Error::Config(_))));
        }
        assert!(matches!(
            taylor_transform(&constant(3), &TaylorConfig::default()),
            Err(Error::InsufficientFrames { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn motion_of_static_sequence_is_zero() {
        let field = motion_magnitude(&constant(8), &TaylorConfig::default()).unwrap();
        assert_eq!(field.magnitudes.dim(), (5, 2, NTU_JOINTS));
        assert!(field.magnitudes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn motion_of_single_moving_joint() {
        let mut s = constant(8);
        for t in 0..8 {
            s.frames[[t, 0, 7, 0]] += t as f64;
        }
        let field = motion_magnitude(&s, &TaylorConfig::default()).unwrap();
        for ((_, b, j), &v) in field.magnitudes.indexed_iter() {
            let expect = if b == 0 && j == 7 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn motion_is_translation_invariant() {
        let mut s = track(9, |t| (t * 0.7).sin());
        let a = motion_magnitude(&s, &TaylorConfig::default()).unwrap();
        s.frames.mapv_inplace(|v| v + 4.25);
        let b = motion_magnitude(&s, &TaylorConfig::default()).unwrap();
        for (x, y) in a.magnitudes.iter().zip(b.magnitudes.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn motion_field_serializes() {
        let field = motion_magnitude(&constant(5), &TaylorConfig::default()).unwrap();
        let json = field.to_json().unwrap();
        assert!(json.contains("\"magnitudes\""));
        assert_eq!(field.at_frame(99, 0).len(), NTU_JOINTS);
    }
}
