use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    SameTok,
    DiffTok,
}

/// One aligned token-position pair between two sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedPair {
    pub pos_a: usize,
    pub pos_b: usize,
    pub kind: PairKind,
}

/// Longest matching block of `a[alo..ahi]` vs `b[blo..bhi]`: maximal length,
/// ties broken by lowest start in `a`, then lowest start in `b`.
fn find_longest_match(
    a: &[u32],
    b_index: &HashMap<u32, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_size) = (alo, blo, 0usize);
    let mut j2len: HashMap<usize, usize> = HashMap::new();
    for (i, tok) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut new_j2len: HashMap<usize, usize> = HashMap::new();
        if let Some(js) = b_index.get(tok) {
            for &j in js {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = if j > blo { j2len.get(&(j - 1)).copied().unwrap_or(0) + 1 } else { 1 };
                new_j2len.insert(j, k);
                if k > best_size {
                    best_i = i + 1 - k;
                    best_j = j + 1 - k;
                    best_size = k;
                }
            }
        }
        j2len = new_j2len;
    }
    (best_i, best_j, best_size)
}

/// All matching blocks, recursively: the longest common contiguous block
/// splits both sequences, and each side is aligned the same way. Returned
/// blocks (start_a, start_b, len) ascend in both sequences.
pub fn matching_blocks(a: &[u32], b: &[u32]) -> Vec<(usize, usize, usize)> {
    let mut b_index: HashMap<u32, Vec<usize>> = HashMap::new();
    for (j, &tok) in b.iter().enumerate() {
        b_index.entry(tok).or_default().push(j);
    }
    let mut blocks = Vec::new();
    let mut stack = vec![(0usize, a.len(), 0usize, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        let (i, j, size) = find_longest_match(a, &b_index, alo, ahi, blo, bhi);
        if size == 0 {
            continue;
        }
        blocks.push((i, j, size));
        stack.push((alo, i, blo, j));
        stack.push((i + size, ahi, j + size, bhi));
    }
    blocks.sort_unstable();
    blocks
}

/// Aligns two token-ID sequences.
///
/// Matched-block positions pair as same-token; between consecutive matched
/// blocks the two unmatched gaps pair index-by-index from their starts, up to
/// the shorter gap length, as different-token positions (the recursion
/// guarantees gap regions share no token, so those pairs always hold unequal
/// IDs). Coverage is 2·paired / (len_a + len_b), zero when both are empty.
pub fn align_tokens(a: &[u32], b: &[u32]) -> (Vec<AlignedPair>, f64) {
    let mut pairs = Vec::new();
    let blocks = matching_blocks(a, b);
    let (mut prev_a, mut prev_b) = (0usize, 0usize);
    let sentinel = [(a.len(), b.len(), 0usize)];
    for &(bi, bj, size) in blocks.iter().chain(sentinel.iter()) {
        let gap = (bi - prev_a).min(bj - prev_b);
        for d in 0..gap {
            debug_assert_ne!(a[prev_a + d], b[prev_b + d], "gap pair with equal tokens");
            pairs.push(AlignedPair { pos_a: prev_a + d, pos_b: prev_b + d, kind: PairKind::DiffTok });
        }
        for d in 0..size {
            pairs.push(AlignedPair { pos_a: bi + d, pos_b: bj + d, kind: PairKind::SameTok });
        }
        prev_a = bi + size;
        prev_b = bj + size;
    }
    let denom = a.len() + b.len();
    let coverage = if denom == 0 { 0.0 } else { 2.0 * pairs.len() as f64 / denom as f64 };
    (pairs, coverage)
}
