use cusprune::model::{LayerShape, ModelConfig, WeightStore};
use cusprune::tensor::Tensor;
use cusprune::{Scalar, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug)]
pub struct ToySpec {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl ToySpec {
    pub fn config(&self) -> ModelConfig {
        ModelConfig::dense(
            self.n_layers,
            self.d_model,
            self.n_heads,
            self.d_ff,
            self.vocab_size,
            self.max_seq_len,
        )
    }
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            vocab_size: 25,
            max_seq_len: 64,
        }
    }
}

/// Gaussian weights scaled by `1/sqrt(fan_in)`; norm gains near 1.
pub fn random_weights<S: Scalar>(config: &ModelConfig, seed: u64) -> WeightStore<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut w = WeightStore::new();
    for (name, shape) in config.tensor_shapes() {
        let n: usize = shape.iter().product();
        let data: Vec<S> = if shape.len() == 1 {
            (0..n).map(|_| S::narrow(1.0 + 0.1 * std.sample(&mut rng))).collect()
        } else {
            let scale = if name == "embed" {
                1.0
            } else {
                1.0 / (shape[1].max(1) as f64).sqrt()
            };
            (0..n).map(|_| S::narrow(scale * std.sample(&mut rng))).collect()
        };
        w.insert(name, Tensor::from_vec(&shape, data).unwrap());
    }
    w
}

pub fn toy_model(spec: &ToySpec, seed: u64) -> (ModelConfig, WeightStore) {
    let config = spec.config();
    let weights = random_weights(&config, seed);
    (config, weights)
}

/// Per-layer widths drawn at random below the base widths, as left behind
/// by earlier pruning. Heads may lose every value channel or vanish.
pub fn ragged_config(base: &ModelConfig, rng: &mut impl Rng) -> ModelConfig {
    let shapes: Vec<LayerShape> = (0..base.n_layers)
        .map(|_| {
            let heads = rng.random_range(1..=base.n_heads);
            LayerShape {
                d_ff: rng.random_range(1..=base.d_ff),
                v_dims: (0..heads).map(|_| rng.random_range(0..=base.head_dim)).collect(),
            }
        })
        .collect();
    let mut c = base.clone();
    c.set_layer_shapes(&shapes);
    c
}

/// `<unk>` followed by the letters `a`..=`x` (25 tokens).
pub fn letter_vocab() -> Vocab {
    let mut tokens = vec![b"<unk>".to_vec()];
    tokens.extend((b'a'..=b'x').map(|c| vec![c]));
    Vocab::new(tokens).unwrap()
}
