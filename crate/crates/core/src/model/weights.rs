use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::config::{names, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named weight tensors of one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore<S = f32> {
    tensors: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> WeightStore<S> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    /// All-zero weights (norm gains set to one) for `config`.
    pub fn zeros_for(config: &ModelConfig) -> Self {
        let mut w = Self::new();
        for (name, shape) in config.tensor_shapes() {
            let t = if shape.len() == 1 {
                Tensor::filled(&shape, S::one())
            } else {
                Tensor::zeros(&shape)
            };
            w.insert(name, t);
        }
        w
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Option<Tensor<S>> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<S>> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> u64 {
        self.tensors.values().map(|t| t.numel() as u64).sum()
    }

    pub fn cast<T: Scalar>(&self) -> WeightStore<T> {
        WeightStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Check names, shapes and finiteness against `config`.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expected = config.tensor_shapes();
        for (name, shape) in &expected {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        if self.tensors.len() != expected.len() {
            let known: std::collections::HashSet<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
            if let Some(extra) = self.tensors.keys().find(|k| !known.contains(k.as_str())) {
                return Err(Error::UnknownTensor(extra.clone()));
            }
        }
        Ok(())
    }

    /// Borrowed view of layer `l`.
    pub fn layer(&self, l: usize) -> Result<LayerWeights<'_, S>> {
        Ok(LayerWeights {
            norm1: self.get(&names::norm1(l))?,
            wq: self.get(&names::wq(l))?,
            wk: self.get(&names::wk(l))?,
            wv: self.get(&names::wv(l))?,
            wo: self.get(&names::wo(l))?,
            norm2: self.get(&names::norm2(l))?,
            gate: self.get(&names::gate(l))?,
            up: self.get(&names::up(l))?,
            down: self.get(&names::down(l))?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerWeights<'a, S> {
    pub norm1: &'a Tensor<S>,
    pub wq: &'a Tensor<S>,
    pub wk: &'a Tensor<S>,
    pub wv: &'a Tensor<S>,
    pub wo: &'a Tensor<S>,
    pub norm2: &'a Tensor<S>,
    pub gate: &'a Tensor<S>,
    pub up: &'a Tensor<S>,
    pub down: &'a Tensor<S>,
}
