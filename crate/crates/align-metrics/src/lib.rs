//! Routing-locality metrics over a finalized run store: token alignment,
//! layer-by-condition Jaccard tables, token-type decomposition, expert
//! co-activation counts, post-fork decay, selection entropy, and the
//! GDN-vs-full-attention rank test.
//!
//! Everything here is a pure function of (store, seed): pair sampling is the
//! only randomized step and it draws from a seeded generator, so re-running
//! an analysis reproduces identical numbers.

mod align;
mod coact;
mod decay;
mod jaccard;
mod mwu;
mod stats;

pub use align::{align_tokens, matching_blocks, AlignedPair, PairKind};
pub use coact::{coactivation_matrix, CoactMatrix};
pub use decay::{decay_curve, sibling_layer_profile, DecayBin, DecayCurve, SiblingLayerProfile};
pub use jaccard::{effective_experts, jaccard, random_baseline, MetricsError};
pub use mwu::{gdn_fa_compare, mann_whitney_u, GdnFaKind, GdnFaReport, MwuResult};
pub use stats::{
    layer_condition_stats, sample_pairs, token_type_stats, Condition, LayerConditionTable,
    NodePairSet, PairSampleConfig, PositionPair, TokenTypeRow, TokenTypeStats, CONDITION_LABELS,
};
