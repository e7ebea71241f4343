//! Confidence-weighted knowledge graph embeddings.
//!
//! Trains entity and relation vectors so that the estimated log-probability
//! of each belief ⟨head, relation, tail⟩ matches the belief's confidence
//! score, then evaluates the learnt space on link prediction (raw/filtered
//! mean rank, Hit@K) and triplet classification (relation-specific
//! thresholds, accuracy, precision-recall).

pub mod data;
pub mod cli;
pub mod evaluator;
pub mod model;
pub mod trainer;

pub use data::{Belief, EntityId, KnowledgeBase, LabeledExample, RelationId, Split};
pub use model::{EmbeddingSpace, NegativeSamples, Norm};
