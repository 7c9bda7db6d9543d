use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Named tensors in insertion order. Used both for trainable parameters and
/// for non-trainable buffers such as batch-norm running statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total element count.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Replaces the tensor values, keeping names; shapes must match.
    pub fn set_tensors(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.tensors.len() {
            return Err(Error::dim("set_tensors", "tensor count mismatch"));
        }
        for ((name, old), new) in self.names.iter().zip(&self.tensors).zip(&tensors) {
            if old.shape() != new.shape() {
                return Err(Error::dim(
                    "set_tensors",
                    format!("`{name}`: {:?} vs {:?}", old.shape(), new.shape()),
                ));
            }
        }
        self.tensors = tensors;
        Ok(())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let list: Vec<NamedTensor> = self
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        serde_json::to_value(list).expect("tensors serialize")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let list: Vec<NamedTensor> =
            serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut set = ParameterSet::new();
        for entry in list {
            let tensor = Tensor::new(entry.shape, entry.data)
                .map_err(|e| Error::Checkpoint(format!("`{}`: {e}", entry.name)))?;
            set.insert(entry.name, tensor)?;
        }
        Ok(set)
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn ensure_same_layout(&self, other: &ParameterSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Checkpoint("parameter names differ from the model layout".into()));
        }
        for (name, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(())
    }
}
