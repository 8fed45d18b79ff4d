use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use crate::trace::RoutingTrace;

pub const ROOT_ID_SALT: &str = "moe-trace/root";

/// Content-derived node identifier (16 hex chars).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Derives a node ID from its position in the tree.
///
/// The root hashes a fixed marker; children hash (parent, branch step, forced
/// token), so re-running the same tree against a deterministic endpoint
/// reproduces the same IDs and duplicate forks deduplicate naturally.
pub fn compute_node_id(
    parent: Option<&NodeId>,
    branch_step: Option<usize>,
    forced_token_id: Option<u32>,
    forced_token_text: Option<&str>,
) -> NodeId {
    let mut hasher = Sha256::new();
    match parent {
        None => hasher.update(ROOT_ID_SALT.as_bytes()),
        Some(p) => {
            hasher.update(p.0.as_bytes());
            hasher.update([0u8]);
            hasher.update(branch_step.unwrap_or(0).to_le_bytes());
            hasher.update([0u8]);
            hasher.update(forced_token_id.unwrap_or(0).to_le_bytes());
            hasher.update([0u8]);
            hasher.update(forced_token_text.unwrap_or("").as_bytes());
        }
    }
    NodeId(hex::encode(&hasher.finalize()[..8]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishStatus {
    Completed,
    Truncated,
    Error,
}

/// One node of the generation tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenNode {
    pub node_id: NodeId,
    pub parent_id: Option<NodeId>,
    /// Decode step in the parent at which this node forked.
    pub branch_step: Option<usize>,
    pub forced_token_id: Option<u32>,
    pub forced_token_text: Option<String>,
    /// The exact prompt text sent to the endpoint for this node.
    pub prefix_text: String,
    pub gen_token_ids: Vec<u32>,
    pub gen_token_texts: Vec<String>,
    /// Per-step (token ID, logprob) pairs, descending probability.
    pub top_logprobs: Vec<Vec<(u32, f64)>>,
    pub trace: RoutingTrace,
    pub finish: FinishStatus,
}

impl GenNode {
    pub fn is_root(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn n_tokens(&self) -> usize {
        self.gen_token_ids.len()
    }

    /// Structural invariants that do not need store context.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.gen_token_ids.len();
        if self.gen_token_texts.len() != n {
            return Err(format!(
                "token text count {} != token id count {n}",
                self.gen_token_texts.len()
            ));
        }
        if self.top_logprobs.len() != n {
            return Err(format!("logprob row count {} != token count {n}", self.top_logprobs.len()));
        }
        if self.trace.n_tokens() != n {
            return Err(format!("trace token count {} != token count {n}", self.trace.n_tokens()));
        }
        if !self.is_root()
            && (self.branch_step.is_none()
                || self.forced_token_id.is_none()
                || self.forced_token_text.is_none())
        {
            return Err("non-root node missing branch_step or forced token".to_string());
        }
        if self.is_root()
            && (self.branch_step.is_some()
                || self.forced_token_id.is_some()
                || self.forced_token_text.is_some())
        {
            return Err("root node carries fork metadata".to_string());
        }
        Ok(())
    }
}

/// A decode step that qualified for forking, with its candidate token set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub node_id: NodeId,
    pub step: usize,
    /// Most-probable tokens, descending, truncated to the fork limit.
    pub candidates: Vec<u32>,
    pub cumulative_prob: f64,
}

/// Two completed generations sharing all context up to `fork_step`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiblingPair {
    pub node_a: NodeId,
    pub node_b: NodeId,
    /// Decision-point step in `node_a`'s step numbering.
    pub fork_step: usize,
}
