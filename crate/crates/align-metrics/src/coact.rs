use serde::Serialize;
use trace_model::GenNode;

/// Expert co-activation counts at one layer over every token position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoactMatrix {
    pub layer: usize,
    pub n_experts: usize,
    /// Dense symmetric `n_experts x n_experts` pair counts, zero diagonal.
    pub counts: Vec<u64>,
    /// Positions where each expert appeared in the top-k set.
    pub activations: Vec<u64>,
    /// Expert IDs sorted by descending activation count (ties low-ID first).
    pub order: Vec<u16>,
    /// Fraction of unordered expert pairs never co-activated.
    pub zero_pair_fraction: f64,
    pub positions: u64,
}

impl CoactMatrix {
    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_experts + j]
    }
}

/// Counts, for every token position, all unordered pairs of that position's
/// layer expert set. An 8-slot row contributes C(8,2) = 28 pairs.
pub fn coactivation_matrix<'a>(
    nodes: impl Iterator<Item = &'a GenNode>,
    layer: usize,
    n_experts: usize,
) -> CoactMatrix {
    let mut counts = vec![0u64; n_experts * n_experts];
    let mut activations = vec![0u64; n_experts];
    let mut positions = 0u64;
    for node in nodes {
        for t in 0..node.trace.n_tokens() {
            positions += 1;
            let row = node.trace.row(t, layer);
            for (s, &ei) in row.iter().enumerate() {
                activations[ei as usize] += 1;
                for &ej in &row[s + 1..] {
                    counts[ei as usize * n_experts + ej as usize] += 1;
                    counts[ej as usize * n_experts + ei as usize] += 1;
                }
            }
        }
    }
    let mut order: Vec<u16> = (0..n_experts as u16).collect();
    order.sort_by(|&x, &y| {
        activations[y as usize].cmp(&activations[x as usize]).then(x.cmp(&y))
    });
    let mut zero_pairs = 0u64;
    for i in 0..n_experts {
        for j in i + 1..n_experts {
            if counts[i * n_experts + j] == 0 {
                zero_pairs += 1;
            }
        }
    }
    let total_pairs = (n_experts * (n_experts - 1) / 2) as f64;
    CoactMatrix {
        layer,
        n_experts,
        counts,
        activations,
        order,
        zero_pair_fraction: if total_pairs > 0.0 { zero_pairs as f64 / total_pairs } else { 0.0 },
        positions,
    }
}
