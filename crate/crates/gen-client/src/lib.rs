//! HTTP client for a raw-completion `/generate` endpoint that returns
//! per-step top logprobs and Base64-encoded routed-expert metadata.
//!
//! Field names on the wire are looked up through an [`EndpointProfile`] so
//! servers with slightly different response schemas can be adapted with a
//! small JSON file instead of a code change.

mod client;
mod codec;
mod prefix;
mod profile;
mod wire;

pub use client::{GenClient, RetryPolicy};
pub use codec::{decode_routed_experts, encode_routed_experts, CodecError};
pub use prefix::build_prefix;
pub use profile::EndpointProfile;
pub use wire::{
    FinishReason, GenError, GenRequest, GenResponse, SamplingParams, TopCandidate, TraceDims,
};
