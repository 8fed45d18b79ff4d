//! Decision-point detection and tree expansion over a generation endpoint.
//!
//! A decision point is a decode step whose most-probable candidate prefix
//! stays under the cumulative threshold with at least two entries. Expansion
//! generates the root, scans every completed node for decision points, forks
//! one child per candidate token, and repeats until the frontier is exhausted
//! or the wall clock runs out, never exceeding the configured number of
//! in-flight generations.

mod dp;
mod expand;

pub use dp::{classify_completion, detect_decision_points, detect_node_decision_points, DpError};
pub use expand::{expand_tree, RunSummary, TreeError};
