//! Prunable structural units and the tensor slices each one owns.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::config::{names, ModelConfig};

/// Declaration order is the canonical class order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NeuronClass {
    FfnChannel,
    AttnValueChannel,
    AttnHead,
    LayerUnit,
}

impl NeuronClass {
    pub fn tag(self) -> &'static str {
        match self {
            NeuronClass::FfnChannel => "ffn",
            NeuronClass::AttnValueChannel => "vchan",
            NeuronClass::AttnHead => "head",
            NeuronClass::LayerUnit => "layer",
        }
    }

    /// Classes eligible for percentile pruning.
    pub fn in_pool(self) -> bool {
        matches!(self, NeuronClass::FfnChannel | NeuronClass::AttnValueChannel)
    }
}

/// A prunable unit. Field order gives the canonical `(layer, class, head,
/// index)` ordering.
///
/// `head` is set only for value channels. For heads `index` is the head
/// number; for layer units it equals `layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId {
    pub layer: usize,
    pub class: NeuronClass,
    pub head: Option<usize>,
    pub index: usize,
}

impl NeuronId {
    pub fn ffn(layer: usize, index: usize) -> Self {
        Self {
            layer,
            class: NeuronClass::FfnChannel,
            head: None,
            index,
        }
    }

    pub fn value(layer: usize, head: usize, index: usize) -> Self {
        Self {
            layer,
            class: NeuronClass::AttnValueChannel,
            head: Some(head),
            index,
        }
    }

    pub fn head(layer: usize, head: usize) -> Self {
        Self {
            layer,
            class: NeuronClass::AttnHead,
            head: None,
            index: head,
        }
    }

    pub fn layer_unit(layer: usize) -> Self {
        Self {
            layer,
            class: NeuronClass::LayerUnit,
            head: None,
            index: layer,
        }
    }

    /// Same unit in a model whose layer numbering differs.
    pub fn with_layer(self, layer: usize) -> Self {
        match self.class {
            NeuronClass::LayerUnit => Self::layer_unit(layer),
            _ => Self { layer, ..self },
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let bad = || Err(Error::InvalidNeuron(self.to_string()));
        if self.layer >= config.n_layers {
            return bad();
        }
        let shape = config.layer_shape(self.layer);
        let ok = match (self.class, self.head) {
            (NeuronClass::FfnChannel, None) => self.index < shape.d_ff,
            (NeuronClass::AttnValueChannel, Some(h)) => h < shape.n_heads() && self.index < shape.v_dims[h],
            (NeuronClass::AttnHead, None) => self.index < shape.n_heads(),
            (NeuronClass::LayerUnit, None) => self.index == self.layer,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            bad()
        }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}.{}.", self.layer, self.class.tag())?;
        if let Some(h) = self.head {
            write!(f, "{h}.")?;
        }
        write!(f, "{}", self.index)
    }
}

impl FromStr for NeuronId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidNeuron(format!("`{s}`"));
        let parts: Vec<&str> = s.split('.').collect();
        let layer: usize = parts
            .first()
            .and_then(|p| p.strip_prefix('L'))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<usize>().ok()).ok_or_else(bad);
        let id = match (parts.get(1).copied(), parts.len()) {
            (Some("ffn"), 3) => NeuronId::ffn(layer, num(2)?),
            (Some("vchan"), 4) => NeuronId::value(layer, num(2)?, num(3)?),
            (Some("head"), 3) => NeuronId::head(layer, num(2)?),
            (Some("layer"), 3) if num(2)? == layer => NeuronId::layer_unit(layer),
            _ => return Err(bad()),
        };
        Ok(id)
    }
}

impl Serialize for NeuronId {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NeuronId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Remove `index` along `axis` (0 = rows, 1 = columns) of `tensor`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SliceInstruction {
    pub tensor: String,
    pub axis: usize,
    pub index: usize,
}

impl SliceInstruction {
    fn new(tensor: String, axis: usize, index: usize) -> Self {
        Self { tensor, axis, index }
    }

    /// Scalars this slice removes from a tensor of `shape`.
    pub fn size(&self, shape: &[usize]) -> usize {
        match (shape.len(), self.axis) {
            (1, 0) => 1,
            (2, 0) => shape[1],
            (2, 1) => shape[0],
            _ => 0,
        }
    }
}

/// Rows and columns that must be removed together with `neuron`.
pub fn coupled_slices(neuron: &NeuronId, config: &ModelConfig) -> Result<Vec<SliceInstruction>> {
    neuron.validate(config)?;
    let l = neuron.layer;
    let shape = config.layer_shape(l);
    let s = SliceInstruction::new;
    let value_slices = |h: usize, j: usize| {
        let col = shape.v_offset(h) + j;
        [s(names::wv(l), 0, col), s(names::wo(l), 1, col)]
    };
    let out = match neuron.class {
        NeuronClass::FfnChannel => {
            let i = neuron.index;
            vec![s(names::up(l), 0, i), s(names::gate(l), 0, i), s(names::down(l), 1, i)]
        }
        NeuronClass::AttnValueChannel => value_slices(neuron.head.unwrap(), neuron.index).to_vec(),
        NeuronClass::AttnHead => {
            let h = neuron.index;
            let hd = config.head_dim;
            let mut v: Vec<_> = (0..shape.v_dims[h]).flat_map(|j| value_slices(h, j)).collect();
            for r in h * hd..(h + 1) * hd {
                v.push(s(names::wq(l), 0, r));
                v.push(s(names::wk(l), 0, r));
            }
            v
        }
        NeuronClass::LayerUnit => {
            let shapes = config.tensor_shapes();
            let prefix = format!("layer.{l}.");
            shapes
                .into_iter()
                .filter(|(n, _)| n.starts_with(&prefix))
                .flat_map(|(n, sh)| (0..sh[0]).map(move |r| s(n.clone(), 0, r)))
                .collect()
        }
    };
    Ok(out)
}

/// Scalars deleted by removing `neuron` (assumed valid for `config`).
pub fn param_weight(neuron: &NeuronId, config: &ModelConfig) -> u64 {
    let d = config.d_model as u64;
    match neuron.class {
        NeuronClass::FfnChannel => 3 * d,
        NeuronClass::AttnValueChannel => 2 * d,
        NeuronClass::AttnHead => {
            let v = config.layer_shape(neuron.layer).v_dims[neuron.index] as u64;
            2 * config.head_dim as u64 * d + 2 * v * d
        }
        NeuronClass::LayerUnit => config.layer_param_count(neuron.layer),
    }
}

/// Every prunable unit of a model in canonical order.
#[derive(Clone, Debug)]
pub struct NeuronUniverse {
    ids: Vec<NeuronId>,
    weights: Vec<u64>,
    positions: HashMap<NeuronId, usize>,
    total_params: u64,
}

impl NeuronUniverse {
    pub fn ids(&self) -> &[NeuronId] {
        &self.ids
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &NeuronId) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn weight(&self, id: &NeuronId) -> Option<u64> {
        self.position(id).map(|p| self.weights[p])
    }

    pub fn total_params(&self) -> u64 {
        self.total_params
    }

    /// Positions of the FFN and value-channel units, in canonical order.
    pub fn pool(&self) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.ids[i].class.in_pool()).collect()
    }

    /// Parameters owned by FFN and value-channel units.
    pub fn prunable_params(&self) -> u64 {
        self.pool().iter().map(|&i| self.weights[i]).sum()
    }

    pub fn count(&self, class: NeuronClass) -> usize {
        self.ids.iter().filter(|n| n.class == class).count()
    }
}

pub fn enumerate_neurons(config: &ModelConfig) -> Result<NeuronUniverse> {
    config.validate()?;
    let mut ids = Vec::new();
    for l in 0..config.n_layers {
        let shape = config.layer_shape(l);
        ids.extend((0..shape.d_ff).map(|i| NeuronId::ffn(l, i)));
        for (h, &vd) in shape.v_dims.iter().enumerate() {
            ids.extend((0..vd).map(|j| NeuronId::value(l, h, j)));
        }
        ids.extend((0..shape.n_heads()).map(|h| NeuronId::head(l, h)));
        ids.push(NeuronId::layer_unit(l));
    }
    debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let weights = ids.iter().map(|n| param_weight(n, config)).collect();
    let positions = ids.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    Ok(NeuronUniverse {
        ids,
        weights,
        positions,
        total_params: config.param_count(),
    })
}
