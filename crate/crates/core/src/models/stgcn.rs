//! Spatial-temporal graph convolution network.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{average_bodies, flatten_bodies, global_pool, Bound, Ctx, Init};
use super::{ForwardOutput, Mode};
use crate::numerics::{ParameterSet, Tape, Tensor, Var};
use crate::topology::SkeletalGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StgcnConfig {
    pub layer_channels: Vec<usize>,
    pub temporal_kernel: usize,
    /// 1-based indices of the layers whose temporal convolution has stride 2.
    pub stride_layers: BTreeSet<usize>,
    pub dropout_p: f64,
    pub residual: bool,
    pub num_classes: usize,
    /// 3 for positions, 6 for concatenated Taylor input.
    pub in_channels: usize,
}

impl Default for StgcnConfig {
    fn default() -> Self {
        StgcnConfig {
            layer_channels: vec![64, 64, 64, 128, 128, 128, 256, 256, 256],
            temporal_kernel: 9,
            stride_layers: [4, 7].into_iter().collect(),
            dropout_p: 0.5,
            residual: true,
            num_classes: 60,
            in_channels: 3,
        }
    }
}

impl StgcnConfig {
    pub fn validate(&self) -> Result<()> {
        let layers = self.layer_channels.len();
        if layers == 0 || self.layer_channels.contains(&0) {
            return Err(Error::Config("layer_channels must be non-empty and positive".into()));
        }
        if let Some(l) = self.stride_layers.iter().find(|&&l| l == 0 || l > layers) {
            return Err(Error::Config(format!("stride layer {l} outside [1, {layers}]")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        if self.temporal_kernel == 0 || self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::Config("temporal_kernel must be odd".into()));
        }
        if self.num_classes < 2 || self.in_channels == 0 {
            return Err(Error::Config("num_classes must be ≥ 2 and in_channels positive".into()));
        }
        Ok(())
    }

    pub fn stride(&self, layer: usize) -> usize {
        if self.stride_layers.contains(&(layer + 1)) {
            2
        } else {
            1
        }
    }

    /// Whether layer `layer` (0-based) needs a projection on its residual path.
    pub fn projects_residual(&self, layer: usize) -> bool {
        let cin = self.layer_in(layer);
        self.residual && (cin != self.layer_channels[layer] || self.stride(layer) != 1)
    }

    fn layer_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.in_channels
        } else {
            self.layer_channels[layer - 1]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stgcn {
    pub cfg: StgcnConfig,
    pub graph: SkeletalGraph,
    pub params: ParameterSet,
    pub buffers: ParameterSet,
    /// Normalized partitions as constant `V × V` tensors.
    partitions: Vec<Tensor>,
}

impl Stgcn {
    pub fn new(cfg: StgcnConfig, graph: SkeletalGraph, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let v = graph.joint_count;
        let p = graph.partitions.len();
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        init.batch_norm("data_bn", v * cfg.in_channels)?;
        for (l, &cout) in cfg.layer_channels.iter().enumerate() {
            let cin = cfg.layer_in(l);
            let k = cfg.temporal_kernel;
            init.weight(&format!("layer{l}.gcn.weight"), &[p * cin, cout], p * cin)?;
            init.batch_norm(&format!("layer{l}.gcn_bn"), cout)?;
            init.weight(&format!("layer{l}.tcn.weight"), &[k, cout, cout], k * cout)?;
            init.batch_norm(&format!("layer{l}.tcn_bn"), cout)?;
            if cfg.projects_residual(l) {
                init.weight(&format!("layer{l}.res.weight"), &[1, cin, cout], cin)?;
                init.batch_norm(&format!("layer{l}.res_bn"), cout)?;
            }
        }
        let width = *cfg.layer_channels.last().expect("validated");
        init.normal("fc.weight", &[width, cfg.num_classes], (1.0 / width as f64).sqrt())?;
        init.constant("fc.bias", &[cfg.num_classes], 0.0)?;
        let Init { params, buffers, .. } = init;
        Self::from_parts(cfg, graph, params, buffers)
    }

    pub(crate) fn from_parts(
        cfg: StgcnConfig,
        graph: SkeletalGraph,
        params: ParameterSet,
        buffers: ParameterSet,
    ) -> Result<Self> {
        cfg.validate()?;
        let partitions = graph
            .partitions
            .iter()
            .map(|m| Tensor::new(vec![m.n, m.n], m.data.clone()))
            .collect::<Result<_>>()?;
        Ok(Stgcn {
            cfg,
            graph,
            params,
            buffers,
            partitions,
        })
    }

    /// `[B, M, T, V, C]` → logits `[B, num_classes]`.
    pub fn forward(&self, tape: &Tape, vars: &[Var], input: &Tensor, mode: Mode<'_>) -> Result<ForwardOutput> {
        let (mut x, bodies) = flatten_bodies(tape, input, self.graph.joint_count, self.cfg.in_channels)?;
        let mut ctx = Ctx {
            bound: Bound::new(&self.params, vars)?,
            buffers: &self.buffers,
            mode,
            updates: Vec::new(),
        };
        let mut layer_shapes = Vec::with_capacity(self.cfg.layer_channels.len());
        x = ctx.data_norm(tape, &x)?;
        let partitions: Vec<Var> = self.partitions.iter().map(|p| tape.constant(p.clone())).collect();

        for (l, &cout) in self.cfg.layer_channels.iter().enumerate() {
            let [n, t, v, cin] = x.shape().try_into().expect("rank 4");
            let frames = tape.reshape(&x, &[n * t, v, cin])?;
            let mixed = partitions
                .iter()
                .map(|a| tape.bmm(a, &frames))
                .collect::<Result<Vec<_>>>()?;
            let stacked = tape.concat_last(&mixed)?;
            let g = tape.matmul(&stacked, ctx.param(&format!("layer{l}.gcn.weight"))?)?;
            let g = tape.reshape(&g, &[n, t, v, cout])?;
            let g = ctx.batch_norm(tape, &format!("layer{l}.gcn_bn"), &g)?;
            let g = tape.relu(&g);

            let stride = self.cfg.stride(l);
            let h = tape.temporal_conv(&g, ctx.param(&format!("layer{l}.tcn.weight"))?, stride)?;
            let mut h = ctx.batch_norm(tape, &format!("layer{l}.tcn_bn"), &h)?;

            if self.cfg.residual {
                let shortcut = if self.cfg.projects_residual(l) {
                    let r = tape.temporal_conv(&x, ctx.param(&format!("layer{l}.res.weight"))?, stride)?;
                    ctx.batch_norm(tape, &format!("layer{l}.res_bn"), &r)?
                } else {
                    x.clone()
                };
                h = tape.add(&h, &shortcut)?;
            }
            let h = tape.relu(&h);
            x = ctx.dropout(tape, &h, self.cfg.dropout_p)?;
            layer_shapes.push(x.shape().to_vec());
        }

        let pooled = global_pool(tape, &x)?;
        let logits = tape.linear(&pooled, ctx.param("fc.weight")?, Some(ctx.param("fc.bias")?))?;
        Ok(ForwardOutput {
            logits: average_bodies(tape, &logits, bodies)?,
            features: average_bodies(tape, &pooled, bodies)?,
            layer_shapes,
            attention: Vec::new(),
            buffer_updates: ctx.updates,
        })
    }

    /// The same network over relabeled joints: old joint `i` becomes `perm[i]`.
    pub fn permuted_joints(&self, perm: &[usize]) -> Result<Self> {
        let graph = self.graph.permuted(perm)?;
        let c = self.cfg.in_channels;
        let params = super::permute_rows(&self.params, &["data_bn.gamma", "data_bn.beta"], perm, c)?;
        let buffers = super::permute_rows(
            &self.buffers,
            &["data_bn.running_mean", "data_bn.running_var"],
            perm,
            c,
        )?;
        Self::from_parts(self.cfg.clone(), graph, params, buffers)
    }
}
