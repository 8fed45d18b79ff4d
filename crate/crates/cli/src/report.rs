use std::path::Path;

use align_metrics::{
    CoactMatrix, DecayCurve, GdnFaReport, LayerConditionTable, SiblingLayerProfile, TokenTypeStats,
};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Layer rows reported in the condensed table (full per-layer output is
/// always written alongside).
pub const REPORT_LAYERS: [usize; 8] = [0, 4, 8, 14, 20, 26, 34, 38];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub size: usize,
    pub comment_fraction: Option<f64>,
    pub blank_fraction: Option<f64>,
    pub exec_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub compiled: usize,
    pub compile_failures: usize,
    pub extraction_failures: usize,
    pub n_groups: usize,
    pub singleton_count: usize,
    pub singleton_fraction: f64,
    /// Sizes of the largest groups, descending.
    pub top_sizes: Vec<usize>,
    /// Fraction of compiled nodes covered by the top three groups.
    pub top3_coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoactSummary {
    pub layer: usize,
    pub positions: u64,
    pub top_experts: Vec<u16>,
    pub top_activations: Vec<u64>,
    pub zero_pair_fraction: f64,
    pub effective_experts: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingDiagnostics {
    pub same_tok_peak_layer: Option<usize>,
    pub diff_tok_peak_layer: Option<usize>,
    pub random_baseline: f64,
}

/// Everything cmd_analyze knows, serialized as report.json. Every table file
/// carries the same seed and config hash in its comment header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub target_triple: Option<String>,
    pub nodes_total: usize,
    pub completed: u64,
    pub truncated: u64,
    pub errors: u64,
    pub sibling_pairs: usize,
    pub skip_compile: bool,
    pub groups: Option<GroupDistribution>,
    pub layer_means: Option<serde_json::Value>,
    pub coverage: Option<f64>,
    pub token_types: Option<serde_json::Value>,
    pub gdn_fa: Option<serde_json::Value>,
    pub coactivation: Option<CoactSummary>,
    pub crossing: Option<CrossingDiagnostics>,
    pub decay_bins: usize,
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub struct CsvHeader<'a> {
    pub seed: u64,
    pub config_hash: &'a str,
}

impl CsvHeader<'_> {
    fn line(&self) -> String {
        format!("# seed={} config_hash={} schema={}\n", self.seed, self.config_hash, REPORT_SCHEMA_VERSION)
    }
}

pub fn write_layer_condition_csv(
    path: &Path,
    table: &LayerConditionTable,
    header: &CsvHeader,
    report_only: bool,
) -> std::io::Result<()> {
    let mut out = header.line();
    out.push_str("layer,w_same,w_diff,b_same,b_diff,all_pairs,n_w_same,n_w_diff,n_b_same,n_b_diff\n");
    let layers: Vec<usize> = if report_only {
        table.report_layers.clone()
    } else {
        (0..table.n_layers).collect()
    };
    for layer in layers {
        let m = &table.means[layer];
        out.push_str(&format!(
            "{layer},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(m[0]),
            fmt_f(m[1]),
            fmt_f(m[2]),
            fmt_f(m[3]),
            fmt_f(table.all_pairs[layer]),
            table.counts[0],
            table.counts[1],
            table.counts[2],
            table.counts[3],
        ));
    }
    let mean_row = |label: &str, values: &[f64; 4], all: f64| {
        format!(
            "{label},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(values[0]),
            fmt_f(values[1]),
            fmt_f(values[2]),
            fmt_f(values[3]),
            fmt_f(all),
            table.counts[0],
            table.counts[1],
            table.counts[2],
            table.counts[3],
        )
    };
    out.push_str(&mean_row("mean_all_layers", &table.mean_all_layers, table.all_pairs_mean_all_layers));
    out.push_str(&mean_row("mean_report_layers", &table.mean_report_layers, f64::NAN));
    std::fs::write(path, out)
}

pub fn write_token_type_csv(
    path: &Path,
    stats: &TokenTypeStats,
    header: &CsvHeader,
) -> std::io::Result<()> {
    let mut out = header.line();
    out.push_str("class,same_j,same_n,diff_j,diff_n\n");
    for row in &stats.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.class,
            fmt_opt(row.same_j),
            row.same_n,
            fmt_opt(row.diff_j),
            row.diff_n
        ));
    }
    std::fs::write(path, out)
}

pub fn write_groups_csv(
    path: &Path,
    groups: &[GroupSummary],
    header: &CsvHeader,
) -> std::io::Result<()> {
    let mut out = header.line();
    out.push_str("group_id,size,comment_fraction,blank_fraction,exec_fraction\n");
    for g in groups {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            g.group_id,
            g.size,
            fmt_opt(g.comment_fraction),
            fmt_opt(g.blank_fraction),
            fmt_opt(g.exec_fraction)
        ));
    }
    std::fs::write(path, out)
}

pub fn write_decay_csv(path: &Path, curve: &DecayCurve, header: &CsvHeader) -> std::io::Result<()> {
    let mut out = header.line();
    out.push_str("offset_start,mean_same,mean_diff,same_token_ratio,n_same,n_diff\n");
    for bin in &curve.bins {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            bin.offset_start,
            fmt_opt(bin.mean_same),
            fmt_opt(bin.mean_diff),
            fmt_f(bin.same_token_ratio),
            bin.n_same,
            bin.n_diff
        ));
    }
    std::fs::write(path, out)
}

pub fn write_coactivation_csv(
    path: &Path,
    order_path: &Path,
    matrix: &CoactMatrix,
    header: &CsvHeader,
) -> std::io::Result<()> {
    let mut out = header.line();
    for i in 0..matrix.n_experts {
        let row: Vec<String> =
            (0..matrix.n_experts).map(|j| matrix.at(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;

    let mut side = header.line();
    side.push_str("rank,expert_id,activations\n");
    for (rank, &expert) in matrix.order.iter().enumerate() {
        side.push_str(&format!("{rank},{expert},{}\n", matrix.activations[expert as usize]));
    }
    std::fs::write(order_path, side)
}

pub fn write_sibling_layers_csv(
    path: &Path,
    profile: &SiblingLayerProfile,
    header: &CsvHeader,
) -> std::io::Result<()> {
    let mut out = header.line();
    out.push_str("layer,same_j,diff_j,n_same,n_diff\n");
    for layer in 0..profile.same_by_layer.len() {
        out.push_str(&format!(
            "{layer},{},{},{},{}\n",
            fmt_f(profile.same_by_layer[layer]),
            fmt_f(profile.diff_by_layer[layer]),
            profile.n_same,
            profile.n_diff
        ));
    }
    std::fs::write(path, out)
}

pub fn gdn_fa_json(report: &GdnFaReport) -> serde_json::Value {
    serde_json::to_value(report).expect("report serializes")
}
