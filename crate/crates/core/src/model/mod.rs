//! Separable model families.

mod activation;
mod cache;
mod cp;
mod interaction;

pub use activation::Activation;
pub use cache::BasisCache;
pub use cp::{CpModel, EvalGradient, ModelDocument};
pub use interaction::{combinations, InteractionEmbedding, InteractionModel, InteractionTerm};
