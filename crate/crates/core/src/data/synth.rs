//! Deterministic synthetic skeleton motions on the NTU joint layout.
//!
//! Each class is a parametric motion family applied to a standing rest pose.
//! Classes beyond the eight base families reuse a family at a higher
//! movement frequency. Per-sequence variation (amplitude, phase, speed,
//! placement) and joint noise are drawn from a seeded ChaCha stream.

use std::f64::consts::PI;

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    Dataset, DatasetManifest, SequenceRef, SkeletonSequence, SplitRule, MAX_BODIES, NTU_JOINTS,
    SPATIAL_DIMS,
};
use crate::topology::joint as j;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_classes: usize,
    pub per_class: usize,
    pub frames: usize,
    /// Standard deviation of per-coordinate Gaussian jitter, meters.
    pub noise_std: f64,
    /// Scales amplitude, phase, speed and placement randomization (0 = none).
    pub variation: f64,
    pub num_subjects: u32,
    /// The highest-numbered subjects are placed in the test id set.
    pub holdout_subjects: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            num_classes: 8,
            per_class: 16,
            frames: 64,
            noise_std: 0.01,
            variation: 1.0,
            num_subjects: 8,
            holdout_subjects: 2,
        }
    }
}

/// Standing rest pose, camera space in meters (y up, z away from the sensor).
pub(crate) const REST_POSE: [[f64; 3]; NTU_JOINTS] = [
    [0.00, 0.00, 3.00],   // spine base
    [0.00, 0.28, 3.00],   // spine mid
    [0.00, 0.58, 2.98],   // neck
    [0.00, 0.74, 2.97],   // head
    [0.18, 0.50, 3.00],   // left shoulder
    [0.24, 0.25, 3.00],   // left elbow
    [0.26, 0.03, 2.98],   // left wrist
    [0.27, -0.04, 2.98],  // left hand
    [-0.18, 0.50, 3.00],  // right shoulder
    [-0.24, 0.25, 3.00],  // right elbow
    [-0.26, 0.03, 2.98],  // right wrist
    [-0.27, -0.04, 2.98], // right hand
    [0.10, -0.04, 3.00],  // left hip
    [0.11, -0.45, 3.00],  // left knee
    [0.11, -0.84, 3.02],  // left ankle
    [0.11, -0.88, 2.92],  // left foot
    [-0.10, -0.04, 3.00], // right hip
    [-0.11, -0.45, 3.00], // right knee
    [-0.11, -0.84, 3.02], // right ankle
    [-0.11, -0.88, 2.92], // right foot
    [0.00, 0.52, 2.99],   // spine shoulder
    [0.28, -0.11, 2.98],  // left hand tip
    [0.24, -0.03, 2.95],  // left thumb
    [-0.28, -0.11, 2.98], // right hand tip
    [-0.24, -0.03, 2.95], // right thumb
];

const LEFT_ARM: [usize; 6] = [
    j::LEFT_ELBOW,
    j::LEFT_WRIST,
    j::LEFT_HAND,
    j::LEFT_HAND_TIP,
    j::LEFT_THUMB,
    j::LEFT_SHOULDER,
];
const RIGHT_ARM: [usize; 6] = [
    j::RIGHT_ELBOW,
    j::RIGHT_WRIST,
    j::RIGHT_HAND,
    j::RIGHT_HAND_TIP,
    j::RIGHT_THUMB,
    j::RIGHT_SHOULDER,
];
const LEFT_LEG: [usize; 3] = [j::LEFT_KNEE, j::LEFT_ANKLE, j::LEFT_FOOT];
const RIGHT_LEG: [usize; 3] = [j::RIGHT_KNEE, j::RIGHT_ANKLE, j::RIGHT_FOOT];

const BASE_FAMILIES: usize = 8;

#[derive(Debug, Clone, Copy)]
enum Family {
    RaiseRightArm,
    RaiseLeftArm,
    SwingRightLeg,
    SwingLeftLeg,
    StaticJitter,
    Squat,
    HeadNod,
    ArmsForward,
}

impl Family {
    fn of_class(class: usize) -> Self {
        match class % BASE_FAMILIES {
            0 => Family::RaiseRightArm,
            1 => Family::RaiseLeftArm,
            2 => Family::SwingRightLeg,
            3 => Family::SwingLeftLeg,
            4 => Family::StaticJitter,
            5 => Family::Squat,
            6 => Family::HeadNod,
            _ => Family::ArmsForward,
        }
    }
}

/// Rotates `p` about `pivot` in the plane spanned by axes `a` and `b`.
fn rotate(p: [f64; 3], pivot: [f64; 3], a: usize, b: usize, angle: f64) -> [f64; 3] {
    let (sin, cos) = angle.sin_cos();
    let da = p[a] - pivot[a];
    let db = p[b] - pivot[b];
    let mut out = p;
    out[a] = pivot[a] + da * cos - db * sin;
    out[b] = pivot[b] + da * sin + db * cos;
    out
}

fn rotate_chain(pose: &mut [[f64; 3]; NTU_JOINTS], chain: &[usize], pivot: usize, a: usize, b: usize, angle: f64) {
    let center = pose[pivot];
    for &joint in chain.iter().filter(|&&c| c != pivot) {
        pose[joint] = rotate(pose[joint], center, a, b, angle);
    }
}

/// Pose of `family` at activation level `s ∈ [0, 1]` scaled by `amp`.
/// `variant` counts how often the family has repeated among the classes.
fn posed(family: Family, s: f64, amp: f64, variant: usize) -> [[f64; 3]; NTU_JOINTS] {
    const X: usize = 0;
    const Y: usize = 1;
    const Z: usize = 2;
    let mut pose = REST_POSE;
    let level = s * amp;
    match family {
        Family::RaiseRightArm => {
            rotate_chain(&mut pose, &RIGHT_ARM, j::RIGHT_SHOULDER, X, Y, -level * 1.75);
        }
        Family::RaiseLeftArm => {
            rotate_chain(&mut pose, &LEFT_ARM, j::LEFT_SHOULDER, X, Y, level * 1.75);
        }
        Family::SwingRightLeg => {
            rotate_chain(&mut pose, &RIGHT_LEG, j::RIGHT_HIP, Z, Y, level * 0.8);
        }
        Family::SwingLeftLeg => {
            rotate_chain(&mut pose, &LEFT_LEG, j::LEFT_HIP, Z, Y, level * 0.8);
        }
        Family::StaticJitter => {
            // Repeated static classes hold progressively stronger side leans.
            let upper: Vec<usize> = (0..NTU_JOINTS)
                .filter(|&k| !matches!(k, j::SPINE_BASE | j::LEFT_HIP | j::RIGHT_HIP)
                    && !LEFT_LEG.contains(&k)
                    && !RIGHT_LEG.contains(&k))
                .collect();
            rotate_chain(&mut pose, &upper, j::SPINE_BASE, X, Y, 0.15 * variant as f64);
        }
        Family::Squat => {
            let drop = level * 0.3;
            for (joint, p) in pose.iter_mut().enumerate() {
                match joint {
                    j::LEFT_ANKLE | j::RIGHT_ANKLE | j::LEFT_FOOT | j::RIGHT_FOOT => {}
                    j::LEFT_KNEE | j::RIGHT_KNEE => {
                        p[Y] -= drop * 0.5;
                        p[Z] -= drop * 0.8;
                    }
                    _ => p[Y] -= drop,
                }
            }
        }
        Family::HeadNod => {
            let neck = pose[j::NECK];
            pose[j::HEAD] = rotate(pose[j::HEAD], neck, Z, Y, level * 0.6);
        }
        Family::ArmsForward => {
            rotate_chain(&mut pose, &LEFT_ARM, j::LEFT_SHOULDER, Z, Y, level * 1.5);
            rotate_chain(&mut pose, &RIGHT_ARM, j::RIGHT_SHOULDER, Z, Y, level * 1.5);
        }
    }
    pose
}

fn centered_uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn generate_one(spec: &SynthSpec, class: usize, rng: &mut ChaCha8Rng) -> Array4<f64> {
    let family = Family::of_class(class);
    let var = spec.variation;
    let cycles = (1 + class / BASE_FAMILIES) as f64 * (1.0 + 0.1 * var * centered_uniform(rng));
    let amp = 1.0 + 0.2 * var * centered_uniform(rng);
    let phase = var * PI * centered_uniform(rng);
    let offset = [0.3 * var * centered_uniform(rng), 0.0, 0.3 * var * centered_uniform(rng)];
    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("finite std");

    let t_total = spec.frames;
    let mut frames = Array4::<f64>::zeros((t_total, MAX_BODIES, NTU_JOINTS, SPATIAL_DIMS));
    for t in 0..t_total {
        let tau = if t_total > 1 { t as f64 / (t_total - 1) as f64 } else { 0.0 };
        let s = 0.5 * (1.0 - (2.0 * PI * cycles * tau + phase).cos());
        let pose = posed(family, s, amp, class / BASE_FAMILIES);
        for (joint, p) in pose.iter().enumerate() {
            for c in 0..SPATIAL_DIMS {
                let jitter = if spec.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
                frames[[t, 0, joint, c]] = p[c] + offset[c] + jitter;
            }
        }
    }
    frames
}

/// False for the class whose samples hold a jittered rest pose; every other
/// class is defined by a movement.
pub fn is_motion_class(class: usize) -> bool {
    !matches!(Family::of_class(class), Family::StaticJitter)
}

/// Generates `num_classes × per_class` labeled sequences, class-major.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    if spec.num_classes < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs at least 2 classes, got {}",
            spec.num_classes
        )));
    }
    if spec.frames == 0 || spec.num_subjects == 0 {
        return Err(Error::Config("frames and num_subjects must be positive".into()));
    }
    if spec.holdout_subjects >= spec.num_subjects {
        return Err(Error::Config(
            "holdout_subjects must leave at least one training subject".into(),
        ));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Config("noise_std must be a finite non-negative value".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sequences = Vec::with_capacity(spec.num_classes * spec.per_class);
    let mut refs = Vec::with_capacity(sequences.capacity());
    for class in 0..spec.num_classes {
        for i in 0..spec.per_class {
            let frames = generate_one(spec, class, &mut rng);
            let seq = SkeletonSequence {
                frames,
                label: class,
                subject_id: 1 + (i as u32 % spec.num_subjects),
                camera_id: 1 + (i as u32 % 3),
                setup_id: 1,
                source_id: format!("synth_s{}_c{:03}_{:03}", spec.seed, class, i),
            };
            refs.push(SequenceRef::describe(
                &seq,
                format!("sequences/{}.json", seq.source_id),
            ));
            sequences.push(seq);
        }
    }

    let first_test = spec.num_subjects - spec.holdout_subjects + 1;
    let manifest = DatasetManifest {
        sequences: refs,
        num_classes: spec.num_classes,
        split_rule: SplitRule::CrossSubject,
        train_ids: (1..first_test).collect(),
        test_ids: (first_test..=spec.num_subjects).collect(),
    };
    Ok(Dataset {
        manifest,
        sequences,
    })
}
