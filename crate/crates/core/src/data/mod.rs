//! Skeleton sequences: ingestion, preprocessing, splits and synthetic data.

mod json;
mod manifest;
mod ntu;
mod synth;

pub use json::{load_json_sequence, write_json_sequence};
pub use manifest::{split_dataset, Dataset, DatasetManifest, SequenceRef, Split, SplitRule};
pub use ntu::{
    ntu_class_index, parse_ntu_skeleton_file, NtuFileMeta, NTU_ACTION_LABELS,
};
pub use synth::{is_motion_class, synth_generate, SynthSpec};

use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Joint count of the NTU RGB+D (Kinect v2) skeleton.
pub const NTU_JOINTS: usize = 25;
/// Bodies kept per frame; absent bodies are zero-filled.
pub const MAX_BODIES: usize = 2;
/// Spatial coordinates per joint.
pub const SPATIAL_DIMS: usize = 3;

/// A skeleton clip with layout `frames[[t, body, joint, channel]]`.
///
/// `channel` is 3 for positions, or 6 when a Taylor displacement stream has
/// been concatenated to the positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Array4<f64>,
    pub label: usize,
    pub subject_id: u32,
    pub camera_id: u32,
    pub setup_id: u32,
    pub source_id: String,
}

impl SkeletonSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn num_bodies(&self) -> usize {
        self.frames.dim().1
    }

    pub fn joint_count(&self) -> usize {
        self.frames.dim().2
    }

    pub fn channels(&self) -> usize {
        self.frames.dim().3
    }

    /// Same metadata, new frame data.
    pub fn with_frames(&self, frames: Array4<f64>) -> Self {
        SkeletonSequence {
            frames,
            label: self.label,
            subject_id: self.subject_id,
            camera_id: self.camera_id,
            setup_id: self.setup_id,
            source_id: self.source_id.clone(),
        }
    }

    /// Checks the structural invariants; `num_classes` bounds the label when given.
    pub fn validate(&self, num_classes: Option<usize>) -> Result<()> {
        if self.num_frames() == 0 {
            return Err(Error::InsufficientFrames { needed: 1, got: 0 });
        }
        if self.joint_count() != NTU_JOINTS {
            return Err(Error::TopologyMismatch {
                expected: NTU_JOINTS,
                found: self.joint_count(),
            });
        }
        if let Some((idx, _)) = self.frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite coordinate at frame {}, body {}, joint {}, channel {}",
                idx.0, idx.1, idx.2, idx.3
            )));
        }
        if let Some(n) = num_classes {
            if self.label >= n {
                return Err(Error::Domain(format!(
                    "label {} out of range for {} classes",
                    self.label, n
                )));
            }
        }
        Ok(())
    }

    /// True when every coordinate of `body` is zero (a padded slot).
    pub fn body_is_empty(&self, body: usize) -> bool {
        self.frames
            .slice(s![.., body, .., ..])
            .iter()
            .all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_frames: usize,
    /// Joint used as origin (0 = spine base).
    pub center_joint: usize,
    /// Subtract the first frame's root position from every present body.
    pub scale_normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_frames: 64,
            center_joint: 0,
            scale_normalize: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_frames < 2 {
            return Err(Error::Config(format!(
                "target_frames must be at least 2, got {}",
                self.target_frames
            )));
        }
        Ok(())
    }
}

/// Linearly resamples the time axis to exactly `target_frames` frames.
pub fn resize_sequence(seq: &SkeletonSequence, target_frames: usize) -> Result<SkeletonSequence> {
    let (t_in, m, v, c) = seq.frames.dim();
    if t_in == 0 {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    if target_frames < 2 {
        return Err(Error::Config(format!(
            "target_frames must be at least 2, got {target_frames}"
        )));
    }
    if t_in == target_frames {
        return Ok(seq.clone());
    }
    let mut out = Array4::<f64>::zeros((target_frames, m, v, c));
    let span = (t_in - 1) as f64;
    let denom = (target_frames - 1) as f64;
    for i in 0..target_frames {
        let pos = i as f64 * span / denom;
        let lo = (pos.floor() as usize).min(t_in - 1);
        let frac = pos - lo as f64;
        let src_lo = seq.frames.slice(s![lo, .., .., ..]);
        let mut dst = out.slice_mut(s![i, .., .., ..]);
        if frac == 0.0 || lo + 1 >= t_in {
            dst.assign(&src_lo);
        } else {
            let src_hi = seq.frames.slice(s![lo + 1, .., .., ..]);
            ndarray::Zip::from(&mut dst)
                .and(&src_lo)
                .and(&src_hi)
                .for_each(|d, &a, &b| *d = a * (1.0 - frac) + b * frac);
        }
    }
    Ok(seq.with_frames(out))
}

/// Translates every non-empty body so the first body's root joint sits at the
/// origin in frame 0. Only the first three (positional) channels move.
pub fn center_sequence(seq: &SkeletonSequence, root: usize) -> Result<SkeletonSequence> {
    if root >= seq.joint_count() {
        return Err(Error::Config(format!(
            "center joint {root} out of range for {} joints",
            seq.joint_count()
        )));
    }
    let Some(anchor_body) = (0..seq.num_bodies()).find(|&b| !seq.body_is_empty(b)) else {
        return Ok(seq.clone());
    };
    let origin: Vec<f64> = (0..SPATIAL_DIMS.min(seq.channels()))
        .map(|c| seq.frames[[0, anchor_body, root, c]])
        .collect();
    let mut frames = seq.frames.clone();
    for body in 0..seq.num_bodies() {
        if seq.body_is_empty(body) {
            continue;
        }
        for (c, &o) in origin.iter().enumerate() {
            frames.slice_mut(s![.., body, .., c]).mapv_inplace(|x| x - o);
        }
    }
    Ok(seq.with_frames(frames))
}

/// Centering (when enabled) followed by temporal resizing.
pub fn preprocess(seq: &SkeletonSequence, cfg: &PreprocessConfig) -> Result<SkeletonSequence> {
    cfg.validate()?;
    let centered = if cfg.scale_normalize {
        center_sequence(seq, cfg.center_joint)?
    } else {
        seq.clone()
    };
    resize_sequence(&centered, cfg.target_frames)
}
