//! Decoder-only transformer: config, weights, bundle format and forward pass.

pub mod bundle;
pub mod config;
pub mod forward;
pub mod weights;

pub use bundle::{decode_tensors, encode_tensors, fingerprint, load_bundle, save_bundle, Bundle};
pub use config::{names, LayerOverride, LayerShape, ModelConfig};
pub use forward::{forward, greedy_decode, logprobs, rms_norm_row, ForwardTrace, LayerTrace};
pub use weights::{LayerWeights, WeightStore};
