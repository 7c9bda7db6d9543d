//! Parameter lookup, initialization and the layer pieces shared by both models.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Mode;
use crate::numerics::{ParameterSet, Tape, Tensor, Var};
use crate::{Error, Result};

/// Batch-norm running statistics momentum: `running ← 0.9·running + 0.1·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Tape variables addressed by parameter name.
pub(crate) struct Bound<'a> {
    set: &'a ParameterSet,
    vars: &'a [Var],
}

impl<'a> Bound<'a> {
    pub fn new(set: &'a ParameterSet, vars: &'a [Var]) -> Result<Self> {
        if set.len() != vars.len() {
            return Err(Error::dim(
                "forward",
                format!("{} variables bound for {} parameters", vars.len(), set.len()),
            ));
        }
        for ((name, t), v) in set.iter().zip(vars) {
            if t.shape() != v.shape() {
                return Err(Error::dim(
                    "forward",
                    format!("`{name}` bound with shape {:?}, expected {:?}", v.shape(), t.shape()),
                ));
            }
        }
        Ok(Bound { set, vars })
    }

    pub fn get(&self, name: &str) -> Result<&'a Var> {
        self.set
            .index_of(name)
            .map(|i| &self.vars[i])
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }
}

/// Builds parameter and buffer sets with seeded initial values.
pub(crate) struct Init {
    pub params: ParameterSet,
    pub buffers: ParameterSet,
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Init {
            params: ParameterSet::new(),
            buffers: ParameterSet::new(),
            rng,
        }
    }

    /// He-normal weights with the given fan-in.
    pub fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<()> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        self.normal(name, shape, std)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<()> {
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.params.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        self.params.insert(name, Tensor::full(shape, value))
    }

    /// `gamma = 1`, `beta = 0`, running mean 0 and variance 1.
    pub fn batch_norm(&mut self, prefix: &str, channels: usize) -> Result<()> {
        self.constant(&format!("{prefix}.gamma"), &[channels], 1.0)?;
        self.constant(&format!("{prefix}.beta"), &[channels], 0.0)?;
        self.buffers
            .insert(format!("{prefix}.running_mean"), Tensor::zeros(&[channels]))?;
        self.buffers
            .insert(format!("{prefix}.running_var"), Tensor::full(&[channels], 1.0))
    }
}

/// Per-forward state: running-statistics updates and the dropout stream.
pub(crate) struct Ctx<'m, 'r> {
    pub bound: Bound<'m>,
    pub buffers: &'m ParameterSet,
    pub mode: Mode<'r>,
    pub updates: Vec<(String, Tensor)>,
}

impl Ctx<'_, '_> {
    pub fn param(&self, name: &str) -> Result<&Var> {
        self.bound.get(name)
    }

    /// Batch-norm over the last axis, batch statistics in train mode and
    /// running statistics in eval mode.
    pub fn batch_norm(&mut self, tape: &Tape, prefix: &str, x: &Var) -> Result<Var> {
        let gamma = self.bound.get(&format!("{prefix}.gamma"))?;
        let beta = self.bound.get(&format!("{prefix}.beta"))?;
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        let running_mean = self.buffer(&mean_name)?;
        let running_var = self.buffer(&var_name)?;
        match self.mode {
            Mode::Eval => {
                let (y, _) = tape.batch_norm(x, gamma, beta, Some((running_mean.data(), running_var.data())))?;
                Ok(y)
            }
            Mode::Train(_) => {
                let (y, stats) = tape.batch_norm(x, gamma, beta, None)?;
                let stats = stats.expect("train mode yields batch statistics");
                let blend = |old: &Tensor, new: &[f64]| {
                    let data = old
                        .data()
                        .iter()
                        .zip(new)
                        .map(|(o, n)| BN_MOMENTUM * o + (1.0 - BN_MOMENTUM) * n)
                        .collect();
                    Tensor::new(old.shape().to_vec(), data).expect("same shape")
                };
                let mean = blend(running_mean, &stats.mean);
                let var = blend(running_var, &stats.var);
                self.updates.push((mean_name, mean));
                self.updates.push((var_name, var));
                Ok(y)
            }
        }
    }

    fn buffer(&self, name: &str) -> Result<&Tensor> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing buffer `{name}`")))
    }

    pub fn dropout(&mut self, tape: &Tape, x: &Var, p: f64) -> Result<Var> {
        match &mut self.mode {
            Mode::Train(rng) if p > 0.0 => tape.dropout(x, p, *rng),
            _ => Ok(x.clone()),
        }
    }

    /// Data normalization over the `V·C` joint-channel axis of `[N, T, V, C]`.
    pub fn data_norm(&mut self, tape: &Tape, x: &Var) -> Result<Var> {
        let s = x.shape().to_vec();
        let flat = tape.reshape(x, &[s[0] * s[1], s[2] * s[3]])?;
        let y = self.batch_norm(tape, "data_bn", &flat)?;
        tape.reshape(&y, &s)
    }
}

/// Global mean pool of `[N, T, V, C]` to `[N, C]`.
pub(crate) fn global_pool(tape: &Tape, x: &Var) -> Result<Var> {
    let s = x.shape();
    let flat = tape.reshape(x, &[s[0], s[1] * s[2], s[3]])?;
    tape.mean_axis1(&flat)
}

/// Averages `[B·M, F]` rows over the `M` body streams.
pub(crate) fn average_bodies(tape: &Tape, x: &Var, bodies: usize) -> Result<Var> {
    let s = x.shape();
    let grouped = tape.reshape(x, &[s[0] / bodies, bodies, s[1]])?;
    tape.mean_axis1(&grouped)
}

/// Checks a `[B, M, T, V, C]` input and returns it as `[B·M, T, V, C]`.
pub(crate) fn flatten_bodies(tape: &Tape, input: &Tensor, joints: usize, channels: usize) -> Result<(Var, usize)> {
    let s = input.shape();
    if s.len() != 5 || s[3] != joints || s[4] != channels || s[0] == 0 || s[1] == 0 {
        return Err(Error::dim(
            "model input",
            format!("expected [B, M, T, {joints}, {channels}], got {s:?}"),
        ));
    }
    let bodies = s[1];
    let x = tape.constant(input.reshaped(&[s[0] * s[1], s[2], s[3], s[4]])?);
    Ok((x, bodies))
}
