use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_norm_eps() -> f64 {
    1e-5
}

fn default_rope_base() -> f64 {
    10000.0
}

/// Architecture hyperparameters of a pre-norm decoder-only transformer.
///
/// `layers` holds per-layer width overrides written by pruning; a layer
/// without an override uses the base widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerOverride>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerOverride {
    pub layer_index: usize,
    pub d_ff_actual: usize,
    pub n_heads_actual: usize,
    /// Surviving value width of each surviving head.
    pub v_dims: Vec<usize>,
}

/// Resolved widths of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub d_ff: usize,
    pub v_dims: Vec<usize>,
}

impl LayerShape {
    pub fn n_heads(&self) -> usize {
        self.v_dims.len()
    }

    pub fn v_total(&self) -> usize {
        self.v_dims.iter().sum()
    }

    /// Column offset of head `h` inside the concatenated value path.
    pub fn v_offset(&self, h: usize) -> usize {
        self.v_dims[..h].iter().sum()
    }
}

impl ModelConfig {
    /// A dense config with default norm epsilon and rotary base.
    pub fn dense(
        n_layers: usize,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        vocab_size: usize,
        max_seq_len: usize,
    ) -> Self {
        Self {
            n_layers,
            d_model,
            n_heads,
            head_dim: d_model / n_heads.max(1),
            d_ff,
            vocab_size,
            max_seq_len,
            norm_eps: default_norm_eps(),
            rope_base: default_rope_base(),
            layers: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn layer_shape(&self, layer: usize) -> LayerShape {
        match self.layers.iter().find(|o| o.layer_index == layer) {
            Some(o) => LayerShape {
                d_ff: o.d_ff_actual,
                v_dims: o.v_dims.clone(),
            },
            None => LayerShape {
                d_ff: self.d_ff,
                v_dims: vec![self.head_dim; self.n_heads],
            },
        }
    }

    /// Replace layer overrides from resolved shapes, keeping only layers that
    /// differ from the base widths.
    pub fn set_layer_shapes(&mut self, shapes: &[LayerShape]) {
        let dense = vec![self.head_dim; self.n_heads];
        self.layers = shapes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.d_ff != self.d_ff || s.v_dims != dense)
            .map(|(i, s)| LayerOverride {
                layer_index: i,
                d_ff_actual: s.d_ff,
                n_heads_actual: s.n_heads(),
                v_dims: s.v_dims.clone(),
            })
            .collect();
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("head_dim", self.head_dim),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.n_heads * self.head_dim != self.d_model {
            return bad(format!(
                "n_heads ({}) x head_dim ({}) != d_model ({})",
                self.n_heads, self.head_dim, self.d_model
            ));
        }
        if !self.head_dim.is_multiple_of(2) {
            return bad(format!("head_dim {} must be even for rotary embedding", self.head_dim));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return bad("norm_eps must be positive".into());
        }
        if !(self.rope_base.is_finite() && self.rope_base > 0.0) {
            return bad("rope_base must be positive".into());
        }
        let mut seen = vec![false; self.n_layers];
        for o in &self.layers {
            if o.layer_index >= self.n_layers {
                return bad(format!("override for layer {} >= n_layers", o.layer_index));
            }
            if std::mem::replace(&mut seen[o.layer_index], true) {
                return bad(format!("duplicate override for layer {}", o.layer_index));
            }
            if o.v_dims.len() != o.n_heads_actual {
                return bad(format!(
                    "layer {}: {} v_dims for n_heads_actual {}",
                    o.layer_index,
                    o.v_dims.len(),
                    o.n_heads_actual
                ));
            }
            if o.n_heads_actual > self.n_heads
                || o.d_ff_actual > self.d_ff
                || o.v_dims.iter().any(|&v| v > self.head_dim)
            {
                return bad(format!("layer {}: override exceeds base widths", o.layer_index));
            }
        }
        Ok(())
    }

    /// Every tensor the config requires, with its shape, in canonical order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![("embed".to_string(), vec![self.vocab_size, d])];
        for l in 0..self.n_layers {
            let s = self.layer_shape(l);
            let qk = s.n_heads() * self.head_dim;
            let v = s.v_total();
            out.extend([
                (names::norm1(l), vec![d]),
                (names::wq(l), vec![qk, d]),
                (names::wk(l), vec![qk, d]),
                (names::wv(l), vec![v, d]),
                (names::wo(l), vec![d, v]),
                (names::norm2(l), vec![d]),
                (names::gate(l), vec![s.d_ff, d]),
                (names::up(l), vec![s.d_ff, d]),
                (names::down(l), vec![d, s.d_ff]),
            ]);
        }
        out.push(("final_norm".to_string(), vec![d]));
        out.push(("unembed".to_string(), vec![self.vocab_size, d]));
        out
    }

    pub fn param_count(&self) -> u64 {
        self.tensor_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>() as u64)
            .sum()
    }

    pub fn layer_param_count(&self, layer: usize) -> u64 {
        let prefix = format!("layer.{layer}.");
        self.tensor_shapes()
            .iter()
            .filter(|(n, _)| n.starts_with(&prefix))
            .map(|(_, s)| s.iter().product::<usize>() as u64)
            .sum()
    }
}

/// Canonical tensor names.
pub mod names {
    pub fn wq(l: usize) -> String {
        format!("layer.{l}.attn.wq")
    }
    pub fn wk(l: usize) -> String {
        format!("layer.{l}.attn.wk")
    }
    pub fn wv(l: usize) -> String {
        format!("layer.{l}.attn.wv")
    }
    pub fn wo(l: usize) -> String {
        format!("layer.{l}.attn.wo")
    }
    pub fn up(l: usize) -> String {
        format!("layer.{l}.ffn.up")
    }
    pub fn gate(l: usize) -> String {
        format!("layer.{l}.ffn.gate")
    }
    pub fn down(l: usize) -> String {
        format!("layer.{l}.ffn.down")
    }
    pub fn norm1(l: usize) -> String {
        format!("layer.{l}.norm1")
    }
    pub fn norm2(l: usize) -> String {
        format!("layer.{l}.norm2")
    }

    /// All tensor-name suffixes of a layer.
    pub const LAYER_SUFFIXES: [&str; 9] = [
        "norm1", "attn.wq", "attn.wk", "attn.wv", "attn.wo", "norm2", "ffn.gate", "ffn.up", "ffn.down",
    ];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_overrides() {
        let mut c = ModelConfig::dense(2, 8, 2, 16, 32, 64);
        c.layers.push(LayerOverride {
            layer_index: 1,
            d_ff_actual: 12,
            n_heads_actual: 2,
            v_dims: vec![4, 3],
        });
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.layer_shape(1).v_offset(1), 4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_heads() {
        assert!(serde_json::from_str::<ModelConfig>(
            r#"{"n_layers":1,"d_model":8,"n_heads":2,"head_dim":4,"d_ff":8,"vocab_size":4,"max_seq_len":8,"bogus":1}"#
        )
        .is_err());
        let mut c = ModelConfig::dense(1, 8, 2, 8, 4, 8);
        c.head_dim = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn param_count_of_dense_toy() {
        let c = ModelConfig::dense(2, 8, 2, 16, 10, 32);
        // embed + unembed + final norm + per layer (2 norms, 4 attn, 3 ffn)
        let per_layer = 2 * 8 + 4 * 64 + 3 * 8 * 16;
        assert_eq!(c.param_count(), (2 * 10 * 8 + 8 + 2 * per_layer) as u64);
    }
}
