use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("jaccard is undefined on an empty set")]
    EmptySet,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Jaccard similarity |A ∩ B| / |A ∪ B| of two expert-ID sets.
pub fn jaccard(a: &[u16], b: &[u16]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable();
    sa.dedup();
    sb.sort_unstable();
    sb.dedup();
    let inter = intersection_size(&sa, &sb);
    Ok(inter as f64 / (sa.len() + sb.len() - inter) as f64)
}

/// Merge-count of two sorted deduplicated slices.
fn intersection_size(a: &[u16], b: &[u16]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Fast path for trace rows, which are already distinct by invariant.
pub(crate) fn jaccard_rows(a: &[u16], b: &[u16]) -> f64 {
    let mut inter = 0usize;
    for x in a {
        if b.contains(x) {
            inter += 1;
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Expected Jaccard similarity of two independent uniform k-subsets of an
/// n-element pool, by the exact hypergeometric expectation:
/// sum over i of C(k,i)·C(n−k,k−i)/C(n,k) · i/(2k−i).
pub fn random_baseline(n_experts: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 || n_experts == 0 || k > n_experts {
        return Err(MetricsError::Domain(format!(
            "cannot draw {k} of {n_experts} experts"
        )));
    }
    let total = binom(n_experts, k) as f64;
    let mut expectation = 0.0;
    for i in 0..=k {
        if k - i > n_experts - k {
            continue;
        }
        let ways = binom(k, i) as f64 * binom(n_experts - k, k - i) as f64;
        let overlap = i as f64 / (2 * k - i) as f64;
        expectation += ways / total * overlap;
    }
    Ok(expectation)
}

/// Effective number of experts: 2^H for the Shannon entropy H (bits) of the
/// normalized selection distribution. Zero-count experts contribute nothing.
pub fn effective_experts(selection_counts: &[u64]) -> Result<f64, MetricsError> {
    let total: u64 = selection_counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::Domain("all selection counts are zero".to_string()));
    }
    let mut entropy_bits = 0.0;
    for &c in selection_counts {
        if c == 0 {
            continue;
        }
        let p = c as f64 / total as f64;
        entropy_bits -= p * p.log2();
    }
    Ok(entropy_bits.exp2())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_disjoint() {
        let a: Vec<u16> = (0..8).collect();
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        let b: Vec<u16> = (8..16).collect();
        assert_eq!(jaccard(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_is_a_third() {
        let a: Vec<u16> = (0..8).collect();
        let b: Vec<u16> = (4..12).collect();
        let j = jaccard(&a, &b).unwrap();
        assert!((j - 4.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn symmetry() {
        let a = [1u16, 5, 9, 12];
        let b = [5u16, 9, 200, 201, 202];
        assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
    }

    #[test]
    fn empty_set_is_domain_error() {
        assert_eq!(jaccard(&[], &[1]), Err(MetricsError::EmptySet));
    }

    #[test]
    fn baseline_256_choose_8_reads_0_016_at_three_decimals() {
        let j = random_baseline(256, 8).unwrap();
        // exact expectation is 0.016898...: 0.016 to three decimal places,
        // and within 1e-3 of the commonly quoted 0.016
        assert_eq!((j * 1000.0).floor(), 16.0, "got {j}");
        assert!((j - 0.016).abs() < 1e-3, "got {j}");
    }

    #[test]
    fn baseline_full_draw_is_total_overlap() {
        assert!((random_baseline(16, 16).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_rejects_oversized_draws() {
        assert!(random_baseline(8, 9).is_err());
        assert!(random_baseline(8, 0).is_err());
    }

    #[test]
    fn effective_experts_boundaries() {
        let uniform = vec![5u64; 256];
        assert!((effective_experts(&uniform).unwrap() - 256.0).abs() < 1e-9);
        let mut single = vec![0u64; 256];
        single[7] = 99;
        assert!((effective_experts(&single).unwrap() - 1.0).abs() < 1e-9);
        let mut two = vec![0u64; 256];
        two[3] = 10;
        two[200] = 10;
        assert!((effective_experts(&two).unwrap() - 2.0).abs() < 1e-9);
        assert!(effective_experts(&[0, 0]).is_err());
    }
}
