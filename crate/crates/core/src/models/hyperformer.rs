//! Transformer over joints with hypergraph-aware attention.
//!
//! Each layer runs multi-head self-attention across the joints of every
//! frame. Attention scores get an additive per-head bias chosen by whether
//! the two joints share a hyperedge. The attention output is mixed through
//! the normalized hypergraph operator and added back, followed by a
//! feed-forward block and a temporal convolution, each with a residual path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{average_bodies, flatten_bodies, global_pool, Bound, Ctx, Init};
use super::{ForwardOutput, Mode};
use crate::numerics::{ParameterSet, Tape, Tensor, Var};
use crate::topology::Hypergraph;
use crate::{Error, Result};

/// Feed-forward width as a multiple of the hidden width.
const FFN_EXPANSION: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperformerConfig {
    pub num_layers: usize,
    pub hidden_channels: usize,
    pub num_heads: usize,
    pub target_frames: usize,
    pub temporal_kernel: usize,
    pub num_classes: usize,
    pub in_channels: usize,
}

impl Default for HyperformerConfig {
    fn default() -> Self {
        HyperformerConfig {
            num_layers: 10,
            hidden_channels: 216,
            num_heads: 6,
            target_frames: 64,
            temporal_kernel: 9,
            num_classes: 60,
            in_channels: 3,
        }
    }
}

impl HyperformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_channels == 0 || self.num_heads == 0 {
            return Err(Error::Config("layers, hidden channels and heads must be positive".into()));
        }
        if !self.hidden_channels.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_channels {} is not divisible by num_heads {}",
                self.hidden_channels, self.num_heads
            )));
        }
        if self.temporal_kernel == 0 || self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::Config("temporal_kernel must be odd".into()));
        }
        if self.num_classes < 2 || self.in_channels == 0 || self.target_frames == 0 {
            return Err(Error::Config("num_classes must be ≥ 2; frames and channels positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_channels / self.num_heads
    }
}

#[derive(Debug, Clone)]
pub struct Hyperformer {
    pub cfg: HyperformerConfig,
    pub hypergraph: Hypergraph,
    pub params: ParameterSet,
    pub buffers: ParameterSet,
    operator: Tensor,
    relations: Vec<usize>,
}

impl Hyperformer {
    pub fn new(cfg: HyperformerConfig, hypergraph: Hypergraph, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let v = hypergraph.joint_count;
        let h = cfg.hidden_channels;
        let d = cfg.head_dim();
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        init.batch_norm("data_bn", v * cfg.in_channels)?;
        init.weight("embed.weight", &[cfg.in_channels, h], cfg.in_channels)?;
        init.constant("embed.bias", &[h], 0.0)?;
        init.normal("embed.joint", &[v, h], 0.02)?;
        for l in 0..cfg.num_layers {
            for head in 0..cfg.num_heads {
                for proj in ["q", "k", "v"] {
                    let std = (1.0 / h as f64).sqrt();
                    init.normal(&format!("layer{l}.head{head}.{proj}"), &[h, d], std)?;
                }
                init.constant(&format!("layer{l}.head{head}.relation_bias"), &[2, 1], 0.0)?;
            }
            init.normal(&format!("layer{l}.out.weight"), &[h, h], (1.0 / h as f64).sqrt())?;
            init.constant(&format!("layer{l}.out.bias"), &[h], 0.0)?;
            let wide = FFN_EXPANSION * h;
            init.weight(&format!("layer{l}.ffn1.weight"), &[h, wide], h)?;
            init.constant(&format!("layer{l}.ffn1.bias"), &[wide], 0.0)?;
            init.normal(&format!("layer{l}.ffn2.weight"), &[wide, h], (1.0 / wide as f64).sqrt())?;
            init.constant(&format!("layer{l}.ffn2.bias"), &[h], 0.0)?;
            let k = cfg.temporal_kernel;
            init.weight(&format!("layer{l}.tcn.weight"), &[k, h, h], k * h)?;
            init.batch_norm(&format!("layer{l}.tcn_bn"), h)?;
        }
        init.normal("fc.weight", &[h, cfg.num_classes], (1.0 / h as f64).sqrt())?;
        init.constant("fc.bias", &[cfg.num_classes], 0.0)?;
        let Init { params, buffers, .. } = init;
        Self::from_parts(cfg, hypergraph, params, buffers)
    }

    pub(crate) fn from_parts(
        cfg: HyperformerConfig,
        hypergraph: Hypergraph,
        params: ParameterSet,
        buffers: ParameterSet,
    ) -> Result<Self> {
        cfg.validate()?;
        let op = hypergraph.operator();
        let operator = Tensor::new(vec![op.n, op.n], op.data)?;
        let relations = hypergraph.relation_classes();
        Ok(Hyperformer {
            cfg,
            hypergraph,
            params,
            buffers,
            operator,
            relations,
        })
    }

    pub fn forward(&self, tape: &Tape, vars: &[Var], input: &Tensor, mode: Mode<'_>) -> Result<ForwardOutput> {
        let v = self.hypergraph.joint_count;
        let (x, bodies) = flatten_bodies(tape, input, v, self.cfg.in_channels)?;
        let t = x.shape()[1];
        if t != self.cfg.target_frames {
            return Err(Error::dim(
                "hyperformer input",
                format!("expected {} frames, got {t}", self.cfg.target_frames),
            ));
        }
        let mut ctx = Ctx {
            bound: Bound::new(&self.params, vars)?,
            buffers: &self.buffers,
            mode,
            updates: Vec::new(),
        };
        let n = x.shape()[0];
        let h = self.cfg.hidden_channels;
        let scale = 1.0 / (self.cfg.head_dim() as f64).sqrt();
        let operator = tape.constant(self.operator.clone());

        let x = ctx.data_norm(tape, &x)?;
        let x = tape.linear(&x, ctx.param("embed.weight")?, Some(ctx.param("embed.bias")?))?;
        let mut x = tape.add_trailing(&x, ctx.param("embed.joint")?)?;

        let mut layer_shapes = Vec::with_capacity(self.cfg.num_layers);
        let mut attention = Vec::with_capacity(self.cfg.num_layers * self.cfg.num_heads);
        for l in 0..self.cfg.num_layers {
            let frames = tape.reshape(&x, &[n * t, v, h])?;
            let mut heads = Vec::with_capacity(self.cfg.num_heads);
            for head in 0..self.cfg.num_heads {
                let p = |proj: &str| format!("layer{l}.head{head}.{proj}");
                let q = tape.matmul(&frames, ctx.param(&p("q"))?)?;
                let k = tape.matmul(&frames, ctx.param(&p("k"))?)?;
                let val = tape.matmul(&frames, ctx.param(&p("v"))?)?;
                let kt = tape.transpose_last2(&k)?;
                let scores = tape.scale(&tape.bmm(&q, &kt)?, scale);
                let bias = tape.gather_rows(ctx.param(&p("relation_bias"))?, &self.relations)?;
                let bias = tape.reshape(&bias, &[v, v])?;
                let weights = tape.softmax(&tape.add_trailing(&scores, &bias)?)?;
                heads.push(tape.bmm(&weights, &val)?);
                attention.push(weights);
            }
            let attended = tape.concat_last(&heads)?;
            let attended = tape.linear(
                &attended,
                ctx.param(&format!("layer{l}.out.weight"))?,
                Some(ctx.param(&format!("layer{l}.out.bias"))?),
            )?;
            let mixed = tape.bmm(&operator, &attended)?;
            let y = tape.add(&frames, &mixed)?;

            let f = tape.linear(
                &y,
                ctx.param(&format!("layer{l}.ffn1.weight"))?,
                Some(ctx.param(&format!("layer{l}.ffn1.bias"))?),
            )?;
            let f = tape.linear(
                &tape.relu(&f),
                ctx.param(&format!("layer{l}.ffn2.weight"))?,
                Some(ctx.param(&format!("layer{l}.ffn2.bias"))?),
            )?;
            let y = tape.add(&y, &f)?;

            let y = tape.reshape(&y, &[n, t, v, h])?;
            let c = tape.temporal_conv(&y, ctx.param(&format!("layer{l}.tcn.weight"))?, 1)?;
            let c = ctx.batch_norm(tape, &format!("layer{l}.tcn_bn"), &c)?;
            x = tape.add(&y, &tape.relu(&c))?;
            layer_shapes.push(x.shape().to_vec());
        }

        let pooled = global_pool(tape, &x)?;
        let logits = tape.linear(&pooled, ctx.param("fc.weight")?, Some(ctx.param("fc.bias")?))?;
        Ok(ForwardOutput {
            logits: average_bodies(tape, &logits, bodies)?,
            features: average_bodies(tape, &pooled, bodies)?,
            layer_shapes,
            attention,
            buffer_updates: ctx.updates,
        })
    }

    /// The same network over relabeled joints: old joint `i` becomes `perm[i]`.
    pub fn permuted_joints(&self, perm: &[usize]) -> Result<Self> {
        let hypergraph = self.hypergraph.permuted(perm)?;
        let c = self.cfg.in_channels;
        let mut params = super::permute_rows(&self.params, &["data_bn.gamma", "data_bn.beta"], perm, c)?;
        params = super::permute_rows(&params, &["embed.joint"], perm, self.cfg.hidden_channels)?;
        let buffers = super::permute_rows(
            &self.buffers,
            &["data_bn.running_mean", "data_bn.running_var"],
            perm,
            c,
        )?;
        Self::from_parts(self.cfg.clone(), hypergraph, params, buffers)
    }
}
