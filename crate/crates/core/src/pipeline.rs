//! From raw sequences to model input batches.

use serde::{Deserialize, Serialize};

use crate::data::{preprocess, PreprocessConfig, SkeletonSequence};
use crate::numerics::Tensor;
use crate::taylor::{taylor_transform, TaylorConfig, TaylorMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputVariant {
    Original,
    Taylor,
}

impl std::str::FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(InputVariant::Original),
            "taylor" => Ok(InputVariant::Taylor),
            other => Err(Error::Config(format!("unknown input variant `{other}`"))),
        }
    }
}

/// Preprocessing applied to every sequence before batching. For Taylor
/// input the transform runs on the raw clip, then centering and resizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPipeline {
    pub variant: InputVariant,
    #[serde(default)]
    pub taylor: TaylorConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
}

impl InputPipeline {
    pub fn new(variant: InputVariant) -> Self {
        InputPipeline {
            variant,
            taylor: TaylorConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }

    /// Channels per joint after preparation, given raw position input.
    pub fn channels(&self) -> usize {
        match (self.variant, self.taylor.mode) {
            (InputVariant::Taylor, TaylorMode::Concat) => 6,
            _ => 3,
        }
    }

    pub fn prepare(&self, seq: &SkeletonSequence) -> Result<SkeletonSequence> {
        match self.variant {
            InputVariant::Original => preprocess(seq, &self.preprocess),
            InputVariant::Taylor => preprocess(&taylor_transform(seq, &self.taylor)?, &self.preprocess),
        }
    }

    pub fn prepare_all(&self, seqs: &[SkeletonSequence]) -> Result<Vec<SkeletonSequence>> {
        seqs.iter().map(|s| self.prepare(s)).collect()
    }
}

/// Stacks equally shaped sequences into a `[B, M, T, V, C]` tensor.
pub fn batch_tensor(seqs: &[&SkeletonSequence]) -> Result<Tensor> {
    let first = seqs.first().ok_or_else(|| Error::dim("batch", "empty batch"))?;
    let (t, m, v, c) = first.frames.dim();
    let mut data = Vec::with_capacity(seqs.len() * t * m * v * c);
    for seq in seqs {
        if seq.frames.dim() != (t, m, v, c) {
            return Err(Error::dim(
                "batch",
                format!("sequence shape {:?} differs from {:?}", seq.frames.dim(), (t, m, v, c)),
            ));
        }
        // frames are stored (t, body, ...); the batch wants (body, t, ...)
        for body in 0..m {
            for ti in 0..t {
                data.extend(seq.frames.slice(ndarray::s![ti, body, .., ..]).iter().copied());
            }
        }
    }
    Tensor::new(vec![seqs.len(), m, t, v, c], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn seq(t: usize) -> SkeletonSequence {
        let mut frames = Array4::zeros((t, 2, 25, 3));
        for ((ti, b, j, c), x) in frames.indexed_iter_mut() {
            *x = (ti * 1000 + b * 100 + j * 3 + c) as f64;
        }
        SkeletonSequence {
            frames,
            label: 1,
            subject_id: 1,
            camera_id: 1,
            setup_id: 1,
            source_id: "p".into(),
        }
    }

    #[test]
    fn batch_layout_is_body_major() {
        let s = seq(4);
        let b = batch_tensor(&[&s, &s]).unwrap();
        assert_eq!(b.shape(), &[2, 2, 4, 25, 3]);
        assert_eq!(b.get(&[1, 1, 3, 7, 2]), s.frames[[3, 1, 7, 2]]);
        assert!(batch_tensor(&[&s, &seq(5)]).is_err());
    }

    #[test]
    fn taylor_pipeline_resizes_to_target() {
        let mut p = InputPipeline::new(InputVariant::Taylor);
        p.preprocess.target_frames = 16;
        let out = p.prepare(&seq(20)).unwrap();
        assert_eq!(out.frames.dim(), (16, 2, 25, 3));
        p.taylor.mode = TaylorMode::Concat;
        assert_eq!(p.channels(), 6);
        assert_eq!(p.prepare(&seq(20)).unwrap().channels(), 6);
    }
}
