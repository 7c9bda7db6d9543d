//! ST-GCN and Hyperformer classifiers over `[B, M, T, V, C]` batches.
//!
//! Both models take parameters as tape variables so the same forward pass
//! serves training, inference and gradient checking. Bodies are processed
//! as independent streams and their logits averaged.

mod hyperformer;
mod layers;
mod stgcn;

use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use hyperformer::{Hyperformer, HyperformerConfig};
pub use layers::BN_MOMENTUM;
pub use stgcn::{Stgcn, StgcnConfig};

use crate::numerics::{ParameterSet, Tape, Tensor, Var};
use crate::pipeline::InputPipeline;
use crate::topology::{build_bodypart_hypergraph, build_ntu_graph, NamedHyperedge};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "skelact-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Train mode uses batch statistics and draws dropout masks from the
/// generator; eval mode uses running statistics and no dropout.
pub enum Mode<'r> {
    Train(&'r mut ChaCha8Rng),
    Eval,
}

pub struct ForwardOutput {
    /// `[B, num_classes]`.
    pub logits: Var,
    /// Pooled features before the classifier, `[B, width]`.
    pub features: Var,
    /// Output shape of every layer, `[B·M, T, V, C]`.
    pub layer_shapes: Vec<Vec<usize>>,
    /// Attention weights `[B·M·T, V, V]` per layer and head (Hyperformer only).
    pub attention: Vec<Var>,
    /// New batch-norm running statistics (train mode only).
    pub buffer_updates: Vec<(String, Tensor)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Stgcn,
    Hyperformer,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Stgcn => "stgcn",
            ModelKind::Hyperformer => "hyperformer",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stgcn" => Ok(ModelKind::Stgcn),
            "hyperformer" => Ok(ModelKind::Hyperformer),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// A model configuration tagged with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Stgcn(StgcnConfig),
    Hyperformer(HyperformerConfig),
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Stgcn => ModelConfig::Stgcn(StgcnConfig::default()),
            ModelKind::Hyperformer => ModelConfig::Hyperformer(HyperformerConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Stgcn(_) => ModelKind::Stgcn,
            ModelConfig::Hyperformer(_) => ModelKind::Hyperformer,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelConfig::Stgcn(c) => c.num_classes,
            ModelConfig::Hyperformer(c) => c.num_classes,
        }
    }

    pub fn set_num_classes(&mut self, n: usize) {
        match self {
            ModelConfig::Stgcn(c) => c.num_classes = n,
            ModelConfig::Hyperformer(c) => c.num_classes = n,
        }
    }

    pub fn set_in_channels(&mut self, n: usize) {
        match self {
            ModelConfig::Stgcn(c) => c.in_channels = n,
            ModelConfig::Hyperformer(c) => c.in_channels = n,
        }
    }

    /// Frames the model expects, when it fixes them.
    pub fn required_frames(&self) -> Option<usize> {
        match self {
            ModelConfig::Stgcn(_) => None,
            ModelConfig::Hyperformer(c) => Some(c.target_frames),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Stgcn(Stgcn),
    Hyperformer(Hyperformer),
}

impl Model {
    /// Builds a freshly initialized model on the NTU skeleton (ST-GCN) or the
    /// default body-part hypergraph (Hyperformer).
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::Stgcn(c) => Model::Stgcn(Stgcn::new(c.clone(), build_ntu_graph(), seed)?),
            ModelConfig::Hyperformer(c) => {
                Model::Hyperformer(Hyperformer::new(c.clone(), build_bodypart_hypergraph(None)?, seed)?)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Stgcn(_) => ModelKind::Stgcn,
            Model::Hyperformer(_) => ModelKind::Hyperformer,
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Stgcn(m) => ModelConfig::Stgcn(m.cfg.clone()),
            Model::Hyperformer(m) => ModelConfig::Hyperformer(m.cfg.clone()),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.config().num_classes()
    }

    pub fn params(&self) -> &ParameterSet {
        match self {
            Model::Stgcn(m) => &m.params,
            Model::Hyperformer(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        match self {
            Model::Stgcn(m) => &mut m.params,
            Model::Hyperformer(m) => &mut m.params,
        }
    }

    pub fn buffers(&self) -> &ParameterSet {
        match self {
            Model::Stgcn(m) => &m.buffers,
            Model::Hyperformer(m) => &m.buffers,
        }
    }

    fn buffers_mut(&mut self) -> &mut ParameterSet {
        match self {
            Model::Stgcn(m) => &mut m.buffers,
            Model::Hyperformer(m) => &mut m.buffers,
        }
    }

    /// `vars` must be bound from [`Model::params`] in order.
    pub fn forward(&self, tape: &Tape, vars: &[Var], input: &Tensor, mode: Mode<'_>) -> Result<ForwardOutput> {
        match self {
            Model::Stgcn(m) => m.forward(tape, vars, input, mode),
            Model::Hyperformer(m) => m.forward(tape, vars, input, mode),
        }
    }

    /// Eval-mode logits without recording a graph.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let tape = Tape::no_grad();
        let vars: Vec<Var> = self.params().tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let out = self.forward(&tape, &vars, input, Mode::Eval)?;
        Ok(out.logits.value().clone())
    }

    pub fn apply_buffer_updates(&mut self, updates: Vec<(String, Tensor)>) -> Result<()> {
        let buffers = self.buffers_mut();
        for (name, value) in updates {
            let slot = buffers
                .get_mut(&name)
                .ok_or_else(|| Error::Config(format!("unknown buffer `{name}`")))?;
            *slot = value;
        }
        Ok(())
    }

    /// The same network over relabeled joints: old joint `i` becomes `perm[i]`.
    pub fn permuted_joints(&self, perm: &[usize]) -> Result<Self> {
        Ok(match self {
            Model::Stgcn(m) => Model::Stgcn(m.permuted_joints(perm)?),
            Model::Hyperformer(m) => Model::Hyperformer(m.permuted_joints(perm)?),
        })
    }
}

/// Total number of scalar parameters.
pub fn count_parameters(params: &ParameterSet) -> usize {
    params.count()
}

/// Moves the `block`-wide row of joint `i` to row `perm[i]` in the named tensors.
pub(crate) fn permute_rows(set: &ParameterSet, names: &[&str], perm: &[usize], block: usize) -> Result<ParameterSet> {
    let mut out = set.clone();
    for &name in names {
        let t = out
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing tensor `{name}`")))?;
        if t.len() != perm.len() * block {
            return Err(Error::dim("permute_rows", format!("`{name}` is not joint-indexed")));
        }
        let old = t.data().to_vec();
        for (i, &p) in perm.iter().enumerate() {
            t.data_mut()[p * block..(p + 1) * block].copy_from_slice(&old[i * block..(i + 1) * block]);
        }
    }
    Ok(out)
}

/// A trained (or freshly built) model with the input pipeline it expects.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub pipeline: InputPipeline,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyperedges: Option<Vec<NamedHyperedge>>,
    pipeline: InputPipeline,
    params: serde_json::Value,
    buffers: serde_json::Value,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let hyperedges = match &self.model {
            Model::Stgcn(_) => None,
            Model::Hyperformer(m) => Some(
                m.hypergraph
                    .names
                    .iter()
                    .zip(&m.hypergraph.hyperedges)
                    .map(|(name, joints)| NamedHyperedge {
                        name: name.clone(),
                        joints: joints.clone(),
                    })
                    .collect(),
            ),
        };
        let doc = CheckpointDoc {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.model.config(),
            hyperedges,
            pipeline: self.pipeline.clone(),
            params: self.model.params().to_json_value(),
            buffers: self.model.buffers().to_json_value(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                doc.format, doc.version
            )));
        }
        let params = ParameterSet::from_json_value(doc.params)?;
        let buffers = ParameterSet::from_json_value(doc.buffers)?;
        let model = match doc.model {
            ModelConfig::Stgcn(cfg) => {
                let fresh = Stgcn::new(cfg.clone(), build_ntu_graph(), 0)?;
                fresh.params.ensure_same_layout(&params)?;
                fresh.buffers.ensure_same_layout(&buffers)?;
                Model::Stgcn(Stgcn::from_parts(cfg, fresh.graph, params, buffers)?)
            }
            ModelConfig::Hyperformer(cfg) => {
                let hg = build_bodypart_hypergraph(doc.hyperedges.as_deref())?;
                let fresh = Hyperformer::new(cfg.clone(), hg, 0)?;
                fresh.params.ensure_same_layout(&params)?;
                fresh.buffers.ensure_same_layout(&buffers)?;
                Model::Hyperformer(Hyperformer::from_parts(cfg, fresh.hypergraph, params, buffers)?)
            }
        };
        Ok(Checkpoint {
            model,
            pipeline: doc.pipeline,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
