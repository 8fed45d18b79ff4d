//! Core data model for MoE routing-trace runs.
//!
//! A run is a tree of generations branched from a shared prefix. Every node
//! carries the tokens it generated, the per-step top logprobs, and the
//! per-token routed-expert trace. Nodes are persisted append-only as JSONL
//! with a separate manifest, so completions can be written concurrently and
//! analysis can stream the finalized store back.

mod config;
mod node;
mod store;
mod trace;

pub use config::{FaLayerRule, RunConfig};
pub use node::{
    compute_node_id, DecisionPoint, FinishStatus, GenNode, NodeId, SiblingPair, ROOT_ID_SALT,
};
pub use store::{Manifest, RunStore, StoreError, StoreWriter};
pub use trace::{RoutingTrace, TraceError};
