//! Personalization engine built on a bipartite user–item usage graph.
//!
//! Interaction events are folded into a [`graph::Graph`], users are scored
//! against it by breadth-first proximity ([`scoring`]), and the resulting
//! lists are used to re-order result lists supplied by an external search
//! engine ([`rerank`]). The [`pipeline`] module decouples event intake from
//! recommendation building through queues and a key/value cache, and
//! [`eval`] holds the offline evaluation tooling.

pub mod error;
pub mod eval;
pub mod export;
pub mod graph;
pub mod pipeline;
pub mod rerank;
pub mod scoring;

pub use error::ValidationError;
pub use graph::{Graph, InteractionEvent, UsageEdge};
pub use rerank::{rerank, RerankRequest, RerankResult};
pub use scoring::{recommend, RecommendationList, ScoredItem, ScoringParams, Weighting};
