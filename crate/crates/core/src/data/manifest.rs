//! Dataset manifests and benchmark splits.
//!
//! A manifest file is JSON:
//!
//! ```json
//! {
//!   "num_classes": 8,
//!   "split_rule": "cross_subject",
//!   "train_ids": [1, 2, 3, 4, 5, 6],
//!   "test_ids": [7, 8],
//!   "sequences": [
//!     {"path": "sequences/a.json", "label": 0, "subject_id": 1, "camera_id": 1, "setup_id": 1}
//!   ]
//! }
//! ```
//!
//! Sequence paths are relative to the manifest's directory. The id sets are
//! read from the manifest rather than hard-coded.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_json_sequence, SkeletonSequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    CrossSubject,
    CrossView,
    CrossSetup,
}

impl SplitRule {
    fn key(self, seq: &SequenceRef) -> u32 {
        match self {
            SplitRule::CrossSubject => seq.subject_id,
            SplitRule::CrossView => seq.camera_id,
            SplitRule::CrossSetup => seq.setup_id,
        }
    }

    pub fn id_kind(self) -> &'static str {
        match self {
            SplitRule::CrossSubject => "subject",
            SplitRule::CrossView => "camera",
            SplitRule::CrossSetup => "setup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRef {
    pub path: String,
    pub label: usize,
    pub subject_id: u32,
    pub camera_id: u32,
    pub setup_id: u32,
}

impl SequenceRef {
    pub fn describe(seq: &SkeletonSequence, path: impl Into<String>) -> Self {
        SequenceRef {
            path: path.into(),
            label: seq.label,
            subject_id: seq.subject_id,
            camera_id: seq.camera_id,
            setup_id: seq.setup_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sequences: Vec<SequenceRef>,
    pub num_classes: usize,
    pub split_rule: SplitRule,
    pub train_ids: BTreeSet<u32>,
    pub test_ids: BTreeSet<u32>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if let Some(id) = self.train_ids.intersection(&self.test_ids).next() {
            return Err(Error::Config(format!(
                "id {id} appears in both train_ids and test_ids"
            )));
        }
        if let Some(s) = self.sequences.iter().find(|s| s.label >= self.num_classes) {
            return Err(Error::Config(format!(
                "sequence `{}` has label {} but num_classes is {}",
                s.path, s.label, self.num_classes
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Reads every referenced sequence, resolving paths against `base_dir`.
    /// Metadata in the sequence file must agree with the manifest entry.
    pub fn load_sequences(&self, base_dir: &Path) -> Result<Vec<SkeletonSequence>> {
        self.sequences
            .iter()
            .map(|entry| {
                let path = base_dir.join(&entry.path);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let seq = load_json_sequence(&text)?;
                if seq.label != entry.label || seq.subject_id != entry.subject_id {
                    return Err(Error::Schema(format!(
                        "sequence `{}` disagrees with its manifest entry",
                        entry.path
                    )));
                }
                seq.validate(Some(self.num_classes))?;
                Ok(seq)
            })
            .collect()
    }
}

/// Indices into `DatasetManifest::sequences`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_dataset(manifest: &DatasetManifest) -> Result<Split> {
    manifest.validate()?;
    let rule = manifest.split_rule;
    let mut split = Split::default();
    for (index, seq) in manifest.sequences.iter().enumerate() {
        let id = rule.key(seq);
        if manifest.train_ids.contains(&id) {
            split.train.push(index);
        } else if manifest.test_ids.contains(&id) {
            split.test.push(index);
        } else {
            return Err(Error::UnassignedSequence {
                index,
                rule: rule.id_kind(),
                id,
            });
        }
    }
    Ok(split)
}

/// A manifest together with its sequences, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub sequences: Vec<SkeletonSequence>,
}

impl Dataset {
    pub fn split(&self) -> Result<Split> {
        split_dataset(&self.manifest)
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&SkeletonSequence> {
        indices.iter().map(|&i| &self.sequences[i]).collect()
    }

    /// Writes the manifest plus one JSON file per sequence under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (entry, seq) in self.manifest.sequences.iter().zip(&self.sequences) {
            let path = dir.join(&entry.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, super::write_json_sequence(seq)?)
                .map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest.to_json()?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_from(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let sequences = manifest.load_sequences(base)?;
        Ok(Dataset {
            manifest,
            sequences,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(subject: u32, camera: u32) -> SequenceRef {
        SequenceRef {
            path: format!("s{subject}c{camera}.json"),
            label: 0,
            subject_id: subject,
            camera_id: camera,
            setup_id: 1,
        }
    }

    fn manifest(subjects: &[u32], rule: SplitRule, train: &[u32], test: &[u32]) -> DatasetManifest {
        DatasetManifest {
            sequences: subjects.iter().map(|&s| entry(s, s + 10)).collect(),
            num_classes: 2,
            split_rule: rule,
            train_ids: train.iter().copied().collect(),
            test_ids: test.iter().copied().collect(),
        }
    }

    #[test]
    fn cross_subject_partitions_by_subject() {
        let m = manifest(&[1, 1, 2, 2], SplitRule::CrossSubject, &[1], &[2]);
        let split = split_dataset(&m).unwrap();
        assert_eq!(split.train, vec![0, 1]);
        assert_eq!(split.test, vec![2, 3]);
    }

    #[test]
    fn cross_view_uses_camera() {
        let m = manifest(&[1, 2, 3], SplitRule::CrossView, &[11, 13], &[12]);
        let split = split_dataset(&m).unwrap();
        assert_eq!(split.train, vec![0, 2]);
        assert_eq!(split.test, vec![1]);
    }

    #[test]
    fn empty_test_set_puts_everything_in_train() {
        let m = manifest(&[1, 2, 2], SplitRule::CrossSubject, &[1, 2], &[]);
        let split = split_dataset(&m).unwrap();
        assert_eq!(split.train.len(), 3);
        assert!(split.test.is_empty());
    }

    #[test]
    fn unassigned_id_is_reported() {
        let m = manifest(&[1, 3], SplitRule::CrossSubject, &[1], &[2]);
        let err = split_dataset(&m).unwrap_err();
        assert!(matches!(err, Error::UnassignedSequence { id: 3, index: 1, .. }));
        assert!(err.to_string().contains('3'));
    }

    #[test]
    fn overlapping_id_sets_rejected() {
        let m = manifest(&[1], SplitRule::CrossSubject, &[1], &[1]);
        assert!(matches!(split_dataset(&m), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = manifest(&[1, 2], SplitRule::CrossSetup, &[1], &[]);
        let back = DatasetManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().unwrap().contains("cross_setup"));
    }
}
