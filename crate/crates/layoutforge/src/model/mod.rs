//! The shared graph-transformer denoiser: prior and decoder variants,
//! condition encoding, training loops and gradient checks.

pub mod embed;
pub mod train;
mod transformer;

pub use embed::{condition_encode, ConditionEmbedding};
pub use transformer::{GraphTransformer, GraphTransformerConfig, NetVariant, PriorLogits};
