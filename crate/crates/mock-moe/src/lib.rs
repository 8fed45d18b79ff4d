//! Deterministic `/generate`-compatible endpoint for desk-scale pipeline runs.
//!
//! Token streams come from a weighted next-token state machine over a small
//! C-flavored vocabulary; expert routing comes from a per-layer mixing model
//! where each layer's routing seed is either the token identity or a rolling
//! context hash. Everything is derived from (config seed, request prefix), so
//! identical requests always produce byte-identical responses.

mod config;
mod generator;
mod hashmix;
mod presets;
mod routing;
mod server;

pub use config::{Candidate, ConfigError, MockConfig, StateDef};
pub use generator::{GenError, GenOutcome, Generation, MockSampling};
pub use presets::{c_demo_config, crossing_lambda, scripted_three_way_root};
pub use routing::{context_hash, synth_routing};
pub use server::{router, serve};
