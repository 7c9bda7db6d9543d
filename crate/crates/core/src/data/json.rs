//! JSON interchange format for skeleton sequences.
//!
//! ```json
//! {
//!   "frames": [[[[x, y, z], ...25 joints], ...bodies], ...frames],
//!   "label": 42,
//!   "subject_id": 1,
//!   "camera_id": 1,
//!   "setup_id": 1,
//!   "source_id": "S001C001P001R001A043"
//! }
//! ```
//!
//! `source_id` is optional. Documents with a single body are padded to two.
//! Each joint row holds 3 values (positions) or 6 (positions followed by a
//! Taylor displacement stream).

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::{SkeletonSequence, MAX_BODIES, NTU_JOINTS};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SequenceDoc {
    frames: Vec<Vec<Vec<Vec<f64>>>>,
    label: usize,
    subject_id: u32,
    camera_id: u32,
    setup_id: u32,
    #[serde(default)]
    source_id: String,
}

pub fn load_json_sequence(text: &str) -> Result<SkeletonSequence> {
    let doc: SequenceDoc =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let t = doc.frames.len();
    if t == 0 {
        return Err(Error::Schema("field `frames` must hold at least one frame".into()));
    }
    let bodies = doc.frames[0].len();
    if bodies == 0 || bodies > MAX_BODIES {
        return Err(Error::Schema(format!(
            "field `frames` must hold 1 or {MAX_BODIES} bodies per frame, found {bodies}"
        )));
    }
    let joints = doc.frames[0][0].len();
    if joints != NTU_JOINTS {
        return Err(Error::TopologyMismatch {
            expected: NTU_JOINTS,
            found: joints,
        });
    }
    let channels = doc.frames[0][0].first().map_or(0, Vec::len);
    if channels != 3 && channels != 6 {
        return Err(Error::Schema(format!(
            "field `frames` joint rows must have 3 or 6 values, found {channels}"
        )));
    }

    let mut frames = Array4::<f64>::zeros((t, MAX_BODIES, joints, channels));
    for (ti, frame) in doc.frames.iter().enumerate() {
        if frame.len() != bodies {
            return Err(Error::Schema(format!(
                "field `frames`: frame {ti} has {} bodies, expected {bodies}",
                frame.len()
            )));
        }
        for (bi, body) in frame.iter().enumerate() {
            if body.len() != joints {
                return Err(Error::TopologyMismatch {
                    expected: joints,
                    found: body.len(),
                });
            }
            for (ji, row) in body.iter().enumerate() {
                if row.len() != channels {
                    return Err(Error::Schema(format!(
                        "field `frames`: frame {ti}, body {bi}, joint {ji} has {} values, expected {channels}",
                        row.len()
                    )));
                }
                for (ci, &v) in row.iter().enumerate() {
                    frames[[ti, bi, ji, ci]] = v;
                }
            }
        }
    }

    let seq = SkeletonSequence {
        frames,
        label: doc.label,
        subject_id: doc.subject_id,
        camera_id: doc.camera_id,
        setup_id: doc.setup_id,
        source_id: doc.source_id,
    };
    seq.validate(None)?;
    Ok(seq)
}

pub fn write_json_sequence(seq: &SkeletonSequence) -> Result<String> {
    let (t, m, v, _) = seq.frames.dim();
    let frames = (0..t)
        .map(|ti| {
            (0..m)
                .map(|bi| {
                    (0..v)
                        .map(|ji| seq.frames.slice(ndarray::s![ti, bi, ji, ..]).to_vec())
                        .collect()
                })
                .collect()
        })
        .collect();
    let doc = SequenceDoc {
        frames,
        label: seq.label,
        subject_id: seq.subject_id,
        camera_id: seq.camera_id,
        setup_id: seq.setup_id,
        source_id: seq.source_id.clone(),
    };
    Ok(serde_json::to_string(&doc)?)
}
