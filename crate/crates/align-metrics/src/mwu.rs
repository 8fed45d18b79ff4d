use serde::Serialize;
use trace_model::FaLayerRule;

use crate::jaccard::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwuResult {
    /// min(U1, U2) with midrank tie handling.
    pub u: f64,
    pub p_two_sided: f64,
    /// Whether the p-value came from exact enumeration.
    pub exact: bool,
}

/// Midranks of the pooled sample.
fn ranks(pooled: &[f64]) -> Vec<f64> {
    let n = pooled.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            out[k] = midrank;
        }
        i = j;
    }
    out
}

fn u_from_rank_sum(r1: f64, n1: usize) -> f64 {
    r1 - (n1 * (n1 + 1)) as f64 / 2.0
}

/// Exact two-sided p by enumerating every assignment of the pooled observed
/// values to group A: the fraction of assignments at least as extreme as the
/// observed U on either tail.
fn exact_p(rank: &[f64], n1: usize, u_lo: f64, u_hi: f64) -> f64 {
    let n = rank.len();
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut picked: Vec<usize> = (0..n1).collect();
    loop {
        let r1: f64 = picked.iter().map(|&i| rank[i]).sum();
        let u1 = u_from_rank_sum(r1, n1);
        total += 1;
        if u1 <= u_lo + 1e-9 || u1 >= u_hi - 1e-9 {
            extreme += 1;
        }
        // next combination in lexicographic order
        let mut i = n1;
        loop {
            if i == 0 {
                return (extreme as f64 / total as f64).min(1.0);
            }
            i -= 1;
            if picked[i] != i + n - n1 {
                break;
            }
        }
        picked[i] += 1;
        for k in i + 1..n1 {
            picked[k] = picked[k - 1] + 1;
        }
    }
}

/// Complementary error function, rational approximation (|error| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Null excess kurtosis of U (tie-free):
/// -(6/5)(n1² + n2² + n1·n2 + n1 + n2) / (n1·n2·(N+1)).
fn u_excess_kurtosis(n1: usize, n2: usize) -> f64 {
    let (m, n) = (n1 as f64, n2 as f64);
    -(6.0 / 5.0) * (m * m + n * n + m * n + m + n) / (m * n * (m + n + 1.0))
}

/// Rank-based Mann-Whitney U with tie correction. Exact enumeration when the
/// pooled size is at most 12, normal approximation with continuity correction
/// otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Domain("both samples must be non-empty".to_string()));
    }
    let (n1, n2) = (a.len(), b.len());
    let mut pooled: Vec<f64> = Vec::with_capacity(n1 + n2);
    pooled.extend_from_slice(a);
    pooled.extend_from_slice(b);
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(MetricsError::Domain("samples contain NaN".to_string()));
    }
    let rank = ranks(&pooled);
    let r1: f64 = rank[..n1].iter().sum();
    let u1 = u_from_rank_sum(r1, n1);
    let u2 = (n1 * n2) as f64 - u1;
    let u_lo = u1.min(u2);
    let u_hi = (n1 * n2) as f64 - u_lo;

    if n1 + n2 <= 12 {
        let p = exact_p(&rank, n1, u_lo, u_hi);
        return Ok(MwuResult { u: u_lo, p_two_sided: p, exact: true });
    }

    let n = (n1 + n2) as f64;
    let mu = (n1 * n2) as f64 / 2.0;
    // tie correction over the pooled midranks
    let tie_sum: f64 = {
        let mut sorted = pooled.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut acc = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            acc += t * t * t - t;
            i = j;
        }
        acc
    };
    let sigma2 = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if sigma2 <= 0.0 {
        return Ok(MwuResult { u: u_lo, p_two_sided: 1.0, exact: false });
    }
    // continuity correction = half the U lattice spacing; midranks from ties
    // put U on a half-integer lattice
    let cc = if tie_sum > 0.0 { 0.25 } else { 0.5 };
    let z = (u_lo - mu + cc) / sigma2.sqrt();
    // Edgeworth correction: the U lattice is platykurtic, and the plain
    // normal tail is off by up to ~0.011 at these sample sizes; the kurtosis
    // term brings mid-range p-values within a few 1e-4 of enumeration.
    let g2 = u_excess_kurtosis(n1, n2);
    let cdf = normal_cdf(z) - normal_pdf(z) * (g2 / 24.0) * (z * z * z - 3.0 * z);
    let p = (2.0 * cdf).clamp(0.0, 1.0);
    Ok(MwuResult { u: u_lo, p_two_sided: p, exact: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GdnFaKind {
    pub u: f64,
    pub p_two_sided: f64,
    pub median_fa: f64,
    pub median_gdn: f64,
}

/// Per-layer Jaccard means split by the attention type preceding each MoE
/// layer, compared with the U test for each token kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GdnFaReport {
    pub n_fa: usize,
    pub n_gdn: usize,
    pub same_tok: GdnFaKind,
    pub diff_tok: GdnFaKind,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn compare_kind(by_layer: &[f64], rule: &FaLayerRule) -> Result<GdnFaKind, MetricsError> {
    let mut fa = Vec::new();
    let mut gdn = Vec::new();
    for (layer, &v) in by_layer.iter().enumerate() {
        if rule.is_fa(layer) {
            fa.push(v);
        } else {
            gdn.push(v);
        }
    }
    if fa.is_empty() || gdn.is_empty() {
        return Err(MetricsError::Domain(
            "layer rule leaves one attention partition empty".to_string(),
        ));
    }
    let res = mann_whitney_u(&fa, &gdn)?;
    Ok(GdnFaKind {
        u: res.u,
        p_two_sided: res.p_two_sided,
        median_fa: median(&mut fa),
        median_gdn: median(&mut gdn),
    })
}

pub fn gdn_fa_compare(
    same_by_layer: &[f64],
    diff_by_layer: &[f64],
    rule: &FaLayerRule,
) -> Result<GdnFaReport, MetricsError> {
    let n_fa = (0..same_by_layer.len()).filter(|&l| rule.is_fa(l)).count();
    Ok(GdnFaReport {
        n_fa,
        n_gdn: same_by_layer.len() - n_fa,
        same_tok: compare_kind(same_by_layer, rule)?,
        diff_tok: compare_kind(diff_by_layer, rule)?,
    })
}
