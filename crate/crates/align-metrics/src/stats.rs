use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use trace_model::{GenNode, NodeId, RunStore};

use crate::align::{align_tokens, PairKind};
use crate::jaccard::{jaccard_rows, MetricsError};
use compile_equiv::{extract_code, lex_c, TokenClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Within,
    Between,
}

/// One aligned token-position pair between two stored nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionPair {
    pub node_a: NodeId,
    pub node_b: NodeId,
    pub pos_a: usize,
    pub pos_b: usize,
    pub kind: PairKind,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSampleConfig {
    pub seed: u64,
    /// Groups up to this size contribute every within-group pair.
    pub within_exhaustive_limit: usize,
    /// Larger groups contribute `within_factor * size` sampled pairs.
    pub within_factor: usize,
    /// Cap on between-group node pairs.
    pub between_cap: usize,
}

impl Default for PairSampleConfig {
    fn default() -> Self {
        PairSampleConfig {
            seed: 0,
            within_exhaustive_limit: 30,
            within_factor: 30,
            between_cap: 20_000,
        }
    }
}

/// Node pairs selected for alignment, split by condition.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePairSet {
    pub within: Vec<(NodeId, NodeId)>,
    pub between: Vec<(NodeId, NodeId)>,
}

/// Draws the analysis pair sample from group memberships (each group a list
/// of node IDs; caller passes them in stable order). Deterministic in the
/// seed.
pub fn sample_pairs(groups: &[Vec<NodeId>], cfg: &PairSampleConfig) -> NodePairSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut within = Vec::new();
    for group in groups {
        let n = group.len();
        if n < 2 {
            continue;
        }
        if n <= cfg.within_exhaustive_limit {
            for i in 0..n {
                for j in i + 1..n {
                    within.push((group[i].clone(), group[j].clone()));
                }
            }
        } else {
            for _ in 0..cfg.within_factor * n {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                within.push((group[i].clone(), group[j].clone()));
            }
        }
    }

    let mut between = Vec::new();
    let cross_total: usize = {
        let mut total = 0usize;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                total += groups[i].len() * groups[j].len();
            }
        }
        total
    };
    if cross_total <= cfg.between_cap {
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                for a in &groups[i] {
                    for b in &groups[j] {
                        between.push((a.clone(), b.clone()));
                    }
                }
            }
        }
    } else {
        // uniform over group pairs, then uniform over members
        let mut group_pairs = Vec::new();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                group_pairs.push((i, j));
            }
        }
        for _ in 0..cfg.between_cap {
            let &(gi, gj) = &group_pairs[rng.random_range(0..group_pairs.len())];
            let a = &groups[gi][rng.random_range(0..groups[gi].len())];
            let b = &groups[gj][rng.random_range(0..groups[gj].len())];
            between.push((a.clone(), b.clone()));
        }
    }
    NodePairSet { within, between }
}

pub const CONDITION_LABELS: [&str; 4] = ["w_same", "w_diff", "b_same", "b_diff"];

/// Per-layer mean Jaccard under the four condition-kind cells, plus the
/// pooled all-pairs aggregate and all-layer mean rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerConditionTable {
    pub n_layers: usize,
    /// Reported layer subset (full per-layer data is always present too).
    pub report_layers: Vec<usize>,
    /// `means[layer][cell]`, cells ordered W-same, W-diff, B-same, B-diff.
    pub means: Vec<[f64; 4]>,
    /// Position-pair counts per cell (identical across layers by construction).
    pub counts: [u64; 4],
    /// Pooled mean over every aligned pair regardless of cell.
    pub all_pairs: Vec<f64>,
    /// Arithmetic mean over all layers of the per-layer means.
    pub mean_all_layers: [f64; 4],
    /// Same, restricted to `report_layers`.
    pub mean_report_layers: [f64; 4],
    pub all_pairs_mean_all_layers: f64,
    /// Mean alignment coverage over sampled pairs.
    pub coverage: f64,
}

impl LayerConditionTable {
    pub fn mean_by_layer(&self, cell: usize) -> Vec<f64> {
        self.means.iter().map(|row| row[cell]).collect()
    }
}

fn usable<'s>(store: &'s RunStore, id: &NodeId) -> Option<&'s GenNode> {
    let node = store.get(id)?;
    if node.n_tokens() == 0 {
        return None;
    }
    Some(node)
}

/// Aligns every sampled node pair and accumulates per-layer Jaccard means by
/// (condition, kind) cell.
pub fn layer_condition_stats(
    store: &RunStore,
    pairs: &NodePairSet,
    report_layers: &[usize],
) -> Result<LayerConditionTable, MetricsError> {
    let n_layers = store.config().n_layers;
    if store.completed_nodes().take(2).count() < 2 {
        return Err(MetricsError::InsufficientData(
            "need at least two completed nodes to align".to_string(),
        ));
    }
    let mut sums = vec![[0.0f64; 4]; n_layers];
    let mut counts = [0u64; 4];
    let mut coverage_sum = 0.0;
    let mut coverage_n = 0u64;

    for (condition, list) in
        [(Condition::Within, &pairs.within), (Condition::Between, &pairs.between)]
    {
        for (ida, idb) in list {
            let (Some(a), Some(b)) = (usable(store, ida), usable(store, idb)) else { continue };
            let (aligned, coverage) = align_tokens(&a.gen_token_ids, &b.gen_token_ids);
            coverage_sum += coverage;
            coverage_n += 1;
            for pair in aligned {
                let cell = match (condition, pair.kind) {
                    (Condition::Within, PairKind::SameTok) => 0,
                    (Condition::Within, PairKind::DiffTok) => 1,
                    (Condition::Between, PairKind::SameTok) => 2,
                    (Condition::Between, PairKind::DiffTok) => 3,
                };
                counts[cell] += 1;
                for (layer, slot) in sums.iter_mut().enumerate() {
                    slot[cell] +=
                        jaccard_rows(a.trace.row(pair.pos_a, layer), b.trace.row(pair.pos_b, layer));
                }
            }
        }
    }

    let means: Vec<[f64; 4]> = sums
        .iter()
        .map(|row| {
            let mut out = [f64::NAN; 4];
            for cell in 0..4 {
                if counts[cell] > 0 {
                    out[cell] = row[cell] / counts[cell] as f64;
                }
            }
            out
        })
        .collect();
    let total_count: u64 = counts.iter().sum();
    let all_pairs: Vec<f64> = sums
        .iter()
        .map(|row| {
            if total_count == 0 {
                f64::NAN
            } else {
                row.iter().sum::<f64>() / total_count as f64
            }
        })
        .collect();

    let mean_over = |layers: &[usize], cell: usize| -> f64 {
        let vals: Vec<f64> =
            layers.iter().filter_map(|&l| means.get(l)).map(|row| row[cell]).collect();
        if vals.is_empty() || counts[cell] == 0 {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let every_layer: Vec<usize> = (0..n_layers).collect();
    let report: Vec<usize> =
        report_layers.iter().copied().filter(|&l| l < n_layers).collect();
    let mut mean_all_layers = [f64::NAN; 4];
    let mut mean_report_layers = [f64::NAN; 4];
    for cell in 0..4 {
        mean_all_layers[cell] = mean_over(&every_layer, cell);
        mean_report_layers[cell] = mean_over(&report, cell);
    }
    let all_pairs_mean_all_layers = if total_count == 0 {
        f64::NAN
    } else {
        all_pairs.iter().sum::<f64>() / n_layers as f64
    };

    Ok(LayerConditionTable {
        n_layers,
        report_layers: report,
        means,
        counts,
        all_pairs,
        mean_all_layers,
        mean_report_layers,
        all_pairs_mean_all_layers,
        coverage: if coverage_n == 0 { 0.0 } else { coverage_sum / coverage_n as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenTypeRow {
    pub class: &'static str,
    pub same_j: Option<f64>,
    pub same_n: u64,
    pub diff_j: Option<f64>,
    pub diff_n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenTypeStats {
    pub rows: Vec<TokenTypeRow>,
    /// Nodes whose source failed to lex and were skipped.
    pub skipped_nodes: u64,
}

/// Majority-byte class of each model token, ties broken by class precedence.
///
/// Classes come from lexing the node's complete program (the stored token
/// texts are only the post-fork tail), then slicing the tail token spans out
/// of the full text.
fn token_classes(store: &RunStore, node: &GenNode, stop_token: &str) -> Option<Vec<Option<TokenClass>>> {
    let completion = store.generated_text(&node.node_id).ok()?;
    let tail_len: usize = node.gen_token_texts.iter().map(String::len).sum();
    let tail_offset = completion.len() - tail_len;
    let source = extract_code(&completion, stop_token).ok()?;
    let offset = completion.find(&source)?;
    let tokens = lex_c(&source).ok()?;

    let mut class_of_byte: Vec<Option<TokenClass>> = vec![None; completion.len()];
    for t in &tokens {
        for slot in class_of_byte[offset + t.start..offset + t.end].iter_mut() {
            *slot = Some(t.class);
        }
    }

    let mut out = Vec::with_capacity(node.gen_token_texts.len());
    let mut cursor = tail_offset;
    for text in &node.gen_token_texts {
        let range = cursor..cursor + text.len();
        cursor = range.end;
        let mut tally: [usize; 7] = [0; 7];
        for b in range {
            if let Some(Some(class)) = class_of_byte.get(b) {
                tally[*class as usize] += 1;
            }
        }
        let best = TokenClass::ALL
            .iter()
            .copied()
            .filter(|c| tally[*c as usize] > 0)
            .max_by(|x, y| {
                tally[*x as usize]
                    .cmp(&tally[*y as usize])
                    .then_with(|| y.precedence().cmp(&x.precedence()))
            });
        out.push(best);
    }
    Some(out)
}

/// Within-group Jaccard by token class: each aligned position lands in the
/// class of node A's token (all-layer-average Jaccard, position-pair counts).
/// Set `require_equal_class` to drop pairs whose two tokens classify
/// differently.
pub fn token_type_stats(
    store: &RunStore,
    within_pairs: &[(NodeId, NodeId)],
    require_equal_class: bool,
) -> TokenTypeStats {
    let n_layers = store.config().n_layers;
    let stop = store.config().stop_token.clone();
    let mut class_cache: std::collections::BTreeMap<NodeId, Option<Vec<Option<TokenClass>>>> =
        std::collections::BTreeMap::new();
    let mut skipped: std::collections::BTreeSet<NodeId> = std::collections::BTreeSet::new();

    let mut sums = [[0.0f64; 2]; 7];
    let mut counts = [[0u64; 2]; 7];

    for (ida, idb) in within_pairs {
        let (Some(a), Some(b)) = (usable(store, ida), usable(store, idb)) else { continue };
        let mut classes_of = |node: &GenNode| -> Option<Vec<Option<TokenClass>>> {
            class_cache
                .entry(node.node_id.clone())
                .or_insert_with(|| token_classes(store, node, &stop))
                .clone()
        };
        let (Some(ca), cb) = (classes_of(a), classes_of(b)) else {
            skipped.insert(ida.clone());
            continue;
        };
        let cb = match cb {
            Some(c) => c,
            None => {
                skipped.insert(idb.clone());
                continue;
            }
        };
        let (aligned, _) = align_tokens(&a.gen_token_ids, &b.gen_token_ids);
        for pair in aligned {
            let Some(class) = ca[pair.pos_a] else { continue };
            if require_equal_class && cb[pair.pos_b] != Some(class) {
                continue;
            }
            let kind_idx = match pair.kind {
                PairKind::SameTok => 0,
                PairKind::DiffTok => 1,
            };
            let mut j = 0.0;
            for layer in 0..n_layers {
                j += jaccard_rows(a.trace.row(pair.pos_a, layer), b.trace.row(pair.pos_b, layer));
            }
            sums[class as usize][kind_idx] += j / n_layers as f64;
            counts[class as usize][kind_idx] += 1;
        }
    }

    let rows = TokenClass::ALL
        .iter()
        .map(|&class| {
            let i = class as usize;
            TokenTypeRow {
                class: class.name(),
                same_j: (counts[i][0] > 0).then(|| sums[i][0] / counts[i][0] as f64),
                same_n: counts[i][0],
                diff_j: (counts[i][1] > 0).then(|| sums[i][1] / counts[i][1] as f64),
                diff_n: counts[i][1],
            }
        })
        .collect();
    TokenTypeStats { rows, skipped_nodes: skipped.len() as u64 }
}
