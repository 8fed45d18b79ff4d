use crate::config::MockConfig;
use crate::hashmix::{mix2, mix3, to_unit, FNV_OFFSET};

const DITHER_SALT: u64 = 0x6d6f_655f_6d69_7801;
const TOKEN_SALT: u64 = 0x6d6f_655f_746f_6b02;
const CTX_SALT: u64 = 0x6d6f_655f_6374_7803;

/// Rolling hash of the last `window` token IDs before the current position.
pub fn context_hash(token_ids: &[u32], window: usize) -> u64 {
    let start = token_ids.len().saturating_sub(window);
    let mut h = FNV_OFFSET;
    for &id in &token_ids[start..] {
        h = mix2(h, id as u64);
    }
    h
}

fn top_of(seed_val: u64, n_experts: usize, take: usize) -> impl Iterator<Item = u16> {
    let mut scored: Vec<(u64, u16)> =
        (0..n_experts).map(|e| (mix2(seed_val, e as u64), e as u16)).collect();
    scored.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(take);
    scored.into_iter().map(|(_, e)| e)
}

/// Top-k expert set for one (token, layer) position.
///
/// The layer's mixing weight decides how many of the `slots` come from the
/// context-hash expert ranking versus the token-identity ranking:
/// `m = floor(lambda * slots + dither)` context slots, the rest token slots,
/// with the dither drawn from (token, context). The count is monotone in
/// lambda position by position, so layer profiles move deterministically
/// with the schedule; at `lambda = 0` the set depends on the token alone and
/// at `lambda = 1` on the context alone. Nothing here is salted by layer
/// index, so layers sharing a lambda value reproduce identical sets: bands
/// in the schedule behave as exact replicas.
pub fn synth_routing(token_id: u32, layer: usize, ctx_hash: u64, cfg: &MockConfig) -> Vec<u16> {
    let lambda = cfg.lambda[layer];
    let dither = to_unit(mix3(DITHER_SALT ^ cfg.seed, token_id as u64, ctx_hash));
    let m = ((lambda * cfg.slots as f64 + dither).floor() as usize).min(cfg.slots);
    let ctx_seed = mix2(CTX_SALT ^ cfg.seed, ctx_hash);
    let tok_seed = mix2(TOKEN_SALT ^ cfg.seed, token_id as u64);

    let mut row: Vec<u16> = Vec::with_capacity(cfg.slots);
    for e in top_of(ctx_seed, cfg.n_routed_experts, m) {
        row.push(e);
    }
    // token-ranked experts fill the remaining slots, skipping duplicates
    for e in top_of(tok_seed, cfg.n_routed_experts, cfg.slots + m) {
        if row.len() == cfg.slots {
            break;
        }
        if !row.contains(&e) {
            row.push(e);
        }
    }
    debug_assert_eq!(row.len(), cfg.slots);
    row
}
