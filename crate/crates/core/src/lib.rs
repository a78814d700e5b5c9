//! Dimension-specific structured pruning for small decoder-only transformers.
//!
//! A model is scored per document of each chosen dimension corpus
//! (language, domain, task). Neurons whose impact falls below a shared
//! percentile on every document form that dimension's irrelevant set, and
//! the intersection over dimensions is removed to give an expert model.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). Bundles
//! on disk are always `f32`; the aliases below name the common instances.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod neuron;
pub mod prune;
pub mod relevance;
pub mod scalar;
pub mod tensor;
pub mod vocab;

pub use corpus::{Axis, DimensionCorpus, DimensionSpec, Document};
pub use error::{Error, Result};
pub use eval::{EvalReport, McqItem, SummItem, Timing};
pub use model::{Bundle, ModelConfig};
pub use neuron::{enumerate_neurons, NeuronClass, NeuronId, NeuronUniverse};
pub use prune::{apply_plan, PrunePlan};
pub use relevance::{ImpactMatrix, IrrelevantSet, ScoreConfig};
pub use scalar::Scalar;
pub use vocab::Vocab;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Weights = model::WeightStore<f32>;
pub type Weights64 = model::WeightStore<f64>;
pub type Trace = model::ForwardTrace<f32>;
pub type Trace64 = model::ForwardTrace<f64>;
