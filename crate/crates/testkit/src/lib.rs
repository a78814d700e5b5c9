//! Test support: seeded toy models, synthetic Markov languages, a
//! straight-line f64 reference forward pass with manual backprop, and a
//! small Adam trainer.

pub mod baseline;
pub mod markov;
pub mod reference;
pub mod toy;
pub mod train;

pub use markov::MarkovLanguage;
pub use toy::{letter_vocab, ragged_config, random_weights, toy_model, ToySpec};
pub use train::{train, TrainConfig};
