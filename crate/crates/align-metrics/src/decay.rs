use serde::Serialize;
use trace_model::{RunStore, SiblingPair};

use crate::jaccard::jaccard_rows;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayBin {
    /// First step offset covered by this bin (offset 0 is the first token
    /// generated after the fork).
    pub offset_start: usize,
    pub mean_same: Option<f64>,
    pub mean_diff: Option<f64>,
    pub same_token_ratio: f64,
    pub n_same: u64,
    pub n_diff: u64,
}

/// Routing-overlap decay with decode-step distance from the fork.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    pub bin_width: usize,
    pub bins: Vec<DecayBin>,
}

/// Per-layer same/diff mean Jaccard over step-aligned sibling positions; the
/// fallback layer profile when compile-equivalence grouping is skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiblingLayerProfile {
    pub same_by_layer: Vec<f64>,
    pub diff_by_layer: Vec<f64>,
    pub n_same: u64,
    pub n_diff: u64,
}

pub fn sibling_layer_profile(store: &RunStore, pairs: &[SiblingPair]) -> SiblingLayerProfile {
    let n_layers = store.config().n_layers;
    let mut sums = vec![[0.0f64; 2]; n_layers];
    let mut counts = [0u64; 2];
    for pair in pairs {
        let (Some(a), Some(b)) = (store.get(&pair.node_a), store.get(&pair.node_b)) else {
            continue;
        };
        let start = pair.fork_step + 1;
        if a.n_tokens() <= start {
            continue;
        }
        let len = (a.n_tokens() - start).min(b.n_tokens());
        for d in 0..len {
            let kind = usize::from(a.gen_token_ids[start + d] != b.gen_token_ids[d]);
            counts[kind] += 1;
            for (layer, slot) in sums.iter_mut().enumerate() {
                slot[kind] += jaccard_rows(a.trace.row(start + d, layer), b.trace.row(d, layer));
            }
        }
    }
    SiblingLayerProfile {
        same_by_layer: sums
            .iter()
            .map(|s| if counts[0] > 0 { s[0] / counts[0] as f64 } else { f64::NAN })
            .collect(),
        diff_by_layer: sums
            .iter()
            .map(|s| if counts[1] > 0 { s[1] / counts[1] as f64 } else { f64::NAN })
            .collect(),
        n_same: counts[0],
        n_diff: counts[1],
    }
}

/// Step-aligned comparison of each sibling pair from the fork onward: the
/// parent's token at `fork_step + 1 + d` lines up with the child's token at
/// `d` (the forked token itself lives in the child's prompt, so generated
/// sequences align exactly from the first post-fork step).
pub fn decay_curve(store: &RunStore, pairs: &[SiblingPair], bin_width: usize) -> DecayCurve {
    let bin_width = bin_width.max(1);
    let n_layers = store.config().n_layers;
    let mut sums: Vec<[f64; 2]> = Vec::new();
    let mut counts: Vec<[u64; 2]> = Vec::new();

    for pair in pairs {
        let (Some(a), Some(b)) = (store.get(&pair.node_a), store.get(&pair.node_b)) else {
            continue;
        };
        let start = pair.fork_step + 1;
        if a.n_tokens() <= start {
            continue;
        }
        let len = (a.n_tokens() - start).min(b.n_tokens());
        for d in 0..len {
            let bin = d / bin_width;
            if bin >= sums.len() {
                sums.resize(bin + 1, [0.0; 2]);
                counts.resize(bin + 1, [0; 2]);
            }
            let same = a.gen_token_ids[start + d] == b.gen_token_ids[d];
            let kind = usize::from(!same);
            let mut j = 0.0;
            for layer in 0..n_layers {
                j += jaccard_rows(a.trace.row(start + d, layer), b.trace.row(d, layer));
            }
            sums[bin][kind] += j / n_layers as f64;
            counts[bin][kind] += 1;
        }
    }

    let bins = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (sum, count))| {
            let total = count[0] + count[1];
            DecayBin {
                offset_start: i * bin_width,
                mean_same: (count[0] > 0).then(|| sum[0] / count[0] as f64),
                mean_diff: (count[1] > 0).then(|| sum[1] / count[1] as f64),
                same_token_ratio: if total > 0 { count[0] as f64 / total as f64 } else { 0.0 },
                n_same: count[0],
                n_diff: count[1],
            }
        })
        .collect();
    DecayCurve { bin_width, bins }
}
