//! Identifiability certification and graph-constrained estimation of causal
//! effects in linear non-Gaussian acyclic models with latent confounders.

pub mod certify;
pub mod graph;
pub mod grica;
pub mod mixing;
pub mod model;
pub mod oracle;
pub mod sem;

pub use graph::{CanonicalDag, GraphError, LvDag, NodeId, NodeKind, NodeSet};
pub use mixing::{build_mixing, MixingMatrix};
pub use model::{EdgeWeights, GeneralModel, WeightedModel};
