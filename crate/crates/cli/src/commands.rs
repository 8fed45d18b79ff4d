use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use align_metrics::{
    coactivation_matrix, decay_curve, effective_experts, gdn_fa_compare, layer_condition_stats,
    random_baseline, sample_pairs, sibling_layer_profile, token_type_stats, LayerConditionTable,
    MetricsError, PairSampleConfig,
};
use compile_equiv::{
    classify_diffs, compile_many, extract_code, group_by_asm, normalize_asm, singleton_count,
    CompilerCmd, O0Group,
};
use gen_client::{EndpointProfile, GenClient, TraceDims};
use thiserror::Error;
use trace_model::{NodeId, RunConfig, RunStore, StoreWriter};
use tree_search::{expand_tree, RunSummary, TreeError};

use crate::report::{
    self, CoactSummary, CrossingDiagnostics, CsvHeader, GroupDistribution, GroupSummary,
    ReportBundle, REPORT_LAYERS, REPORT_SCHEMA_VERSION,
};
use crate::svg;

pub const ENDPOINT_ENV: &str = "MOE_TRACE_ENDPOINT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{0}")]
    Internal(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("io error: {e}"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub p_target: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub max_concurrent: Option<usize>,
    pub endpoint: Option<String>,
    /// Endpoint-profile JSON remapping wire field names for drifted servers.
    pub profile: Option<PathBuf>,
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let raw = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&raw)
                .map_err(|e| CliError::Config(format!("{} is not a valid run config: {e}", p.display())))
        }
    }
}

/// Expands the generation tree against the configured endpoint and persists
/// the store under `out_dir`.
pub async fn cmd_run(
    config_path: Option<&Path>,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, CliError> {
    let mut config = load_run_config(config_path)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(p) = opts.p_target {
        config.p_target = p;
    }
    if let Some(t) = opts.timeout_secs {
        config.timeout_secs = t;
    }
    if let Some(c) = opts.max_concurrent {
        config.max_concurrent = c;
    }
    if let Some(url) = &opts.endpoint {
        config.endpoint_url = url.clone();
    }
    if let Ok(url) = std::env::var(ENDPOINT_ENV) {
        if !url.is_empty() {
            config.endpoint_url = url;
        }
    }
    config.validate().map_err(CliError::Config)?;

    let profile = match &opts.profile {
        None => EndpointProfile::default(),
        Some(path) => EndpointProfile::load(path)
            .map_err(|e| CliError::Config(format!("bad endpoint profile {}: {e}", path.display())))?,
    };

    RunStore::save_config(out_dir, &config).map_err(|e| CliError::Internal(e.to_string()))?;
    let writer = StoreWriter::create(out_dir, config.clone())
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let client = GenClient::new(
        &config.endpoint_url,
        profile,
        TraceDims {
            n_layers: config.n_layers,
            slots: config.routed_experts_per_layer,
            n_experts: config.n_routed_experts,
        },
    );
    let (_store, summary) = expand_tree(&config, &client, writer).await.map_err(|e| match e {
        TreeError::Config(msg) => CliError::Config(msg),
        other => CliError::Internal(other.to_string()),
    })?;

    println!(
        "run complete: {} nodes ({} completed, {} truncated, {} errors), {} forks, {} decision points, wall {:.1}s{}",
        summary.nodes_total,
        summary.completed,
        summary.truncated,
        summary.errors,
        summary.forks_scheduled,
        summary.decision_points,
        summary.wall.as_secs_f64(),
        if summary.timeout_hit { " (timeout)" } else { "" }
    );
    println!("store written to {}", out_dir.display());

    if summary.completed == 0 && summary.errors > 0 {
        return Err(CliError::Endpoint(format!(
            "no generation completed against {} ({} errors)",
            config.endpoint_url, summary.errors
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    /// Pair-sampling seed; defaults to the run seed recorded in the manifest.
    pub seed: Option<u64>,
    pub compiler: Option<String>,
    pub skip_compile: bool,
    pub pair_cap: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { seed: None, compiler: None, skip_compile: false, pair_cap: 20_000 }
    }
}

struct GroupingOutcome {
    groups: Vec<O0Group>,
    summaries: Vec<GroupSummary>,
    distribution: GroupDistribution,
    target_triple: Option<String>,
}

fn run_grouping(store: &RunStore, compiler: &CompilerCmd) -> Result<GroupingOutcome, CliError> {
    let stop = &store.config().stop_token;
    let mut sources: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut extraction_failures = 0usize;
    for node in store.completed_nodes() {
        let completion = match store.generated_text(&node.node_id) {
            Ok(text) => text,
            Err(_) => {
                extraction_failures += 1;
                continue;
            }
        };
        match extract_code(&completion, stop) {
            Ok(src) => {
                sources.insert(node.node_id.clone(), src);
            }
            Err(_) => extraction_failures += 1,
        }
    }
    let source_list: Vec<(NodeId, String)> =
        sources.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4);
    let compiled = compile_many(&source_list, compiler, jobs);

    let mut entries = Vec::new();
    let mut compile_failures = 0usize;
    for (id, outcome) in compiled {
        match outcome {
            Ok(Ok(success)) => entries.push((id, normalize_asm(&success.asm))),
            Ok(Err(_)) => compile_failures += 1,
            Err(e) => return Err(CliError::Internal(format!("compiler invocation failed: {e}"))),
        }
    }
    let mut groups = group_by_asm(&entries);
    for group in &mut groups {
        if group.size() < 2 {
            continue;
        }
        let rep = sources[&group.representative].as_str();
        let members: Vec<&str> =
            group.members.iter().map(|m| sources[m].as_str()).collect();
        group.breakdown = Some(classify_diffs(rep, &members));
    }

    let compiled_total: usize = groups.iter().map(O0Group::size).sum();
    let singles = singleton_count(&groups);
    let top_sizes: Vec<usize> = groups.iter().take(10).map(O0Group::size).collect();
    let top3: usize = groups.iter().take(3).map(O0Group::size).sum();
    let summaries = groups
        .iter()
        .map(|g| GroupSummary {
            group_id: g.group_id.clone(),
            size: g.size(),
            comment_fraction: g.breakdown.map(|b| b.comment_fraction),
            blank_fraction: g.breakdown.map(|b| b.blank_fraction),
            exec_fraction: g.breakdown.map(|b| b.exec_fraction),
        })
        .collect();
    let distribution = GroupDistribution {
        compiled: compiled_total,
        compile_failures,
        extraction_failures,
        n_groups: groups.len(),
        singleton_count: singles,
        singleton_fraction: if compiled_total > 0 {
            singles as f64 / compiled_total as f64
        } else {
            0.0
        },
        top_sizes,
        top3_coverage: if compiled_total > 0 { top3 as f64 / compiled_total as f64 } else { 0.0 },
    };
    Ok(GroupingOutcome { groups, summaries, distribution, target_triple: compiler.target_triple() })
}

fn pooled_kind_curves(table: &LayerConditionTable) -> (Vec<f64>, Vec<f64>) {
    let weight = |cell: usize| table.counts[cell] as f64;
    let pool = |cells: [usize; 2], layer: usize| {
        let (mut num, mut den) = (0.0, 0.0);
        for cell in cells {
            let m = table.means[layer][cell];
            if m.is_finite() {
                num += m * weight(cell);
                den += weight(cell);
            }
        }
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    };
    let same = (0..table.n_layers).map(|l| pool([0, 2], l)).collect();
    let diff = (0..table.n_layers).map(|l| pool([1, 3], l)).collect();
    (same, diff)
}

fn argmax_finite(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Runs compile-equivalence grouping and the full metrics pass over a
/// finalized store, writing tables, figures, and report.json to `out_dir`.
pub fn cmd_analyze(
    store_dir: &Path,
    out_dir: &Path,
    opts: &AnalyzeOptions,
) -> Result<(ReportBundle, PathBuf), CliError> {
    let started = Instant::now();
    let store = RunStore::load(store_dir).map_err(|e| {
        CliError::InsufficientData(format!("cannot load store at {}: {e}", store_dir.display()))
    })?;
    if store.is_empty() {
        return Err(CliError::InsufficientData("store has no nodes".to_string()));
    }
    let completed_count = store.completed_nodes().count();
    if completed_count == 0 {
        return Err(CliError::InsufficientData("store has no completed nodes".to_string()));
    }
    std::fs::create_dir_all(out_dir)?;

    let config = store.config().clone();
    let seed = opts.seed.unwrap_or(store.manifest().seed);
    let header = CsvHeader { seed, config_hash: &store.manifest().config_hash };
    let baseline =
        random_baseline(config.n_routed_experts, config.routed_experts_per_layer)
            .map_err(|e| CliError::Internal(e.to_string()))?;

    // sibling analysis runs in both modes
    let sibling_pairs = store.extract_sibling_pairs();
    let decay = decay_curve(&store, &sibling_pairs, 10);
    report::write_decay_csv(&out_dir.join("decay.csv"), &decay, &header)?;
    let sib_profile = sibling_layer_profile(&store, &sibling_pairs);
    report::write_sibling_layers_csv(&out_dir.join("sibling_layers.csv"), &sib_profile, &header)?;
    std::fs::write(
        out_dir.join("decay.svg"),
        svg::line_chart(
            "routing overlap decay after fork",
            "step offset bin",
            &[
                svg::Series {
                    label: "same-tok",
                    color: "royalblue",
                    values: decay.bins.iter().map(|b| b.mean_same.unwrap_or(f64::NAN)).collect(),
                },
                svg::Series {
                    label: "diff-tok",
                    color: "darkorange",
                    values: decay.bins.iter().map(|b| b.mean_diff.unwrap_or(f64::NAN)).collect(),
                },
            ],
            Some(baseline),
        ),
    )?;

    let mut bundle = ReportBundle {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        config_hash: store.manifest().config_hash.clone(),
        target_triple: None,
        nodes_total: store.len(),
        completed: store.manifest().completed,
        truncated: store.manifest().truncated,
        errors: store.manifest().errors,
        sibling_pairs: sibling_pairs.len(),
        skip_compile: opts.skip_compile,
        groups: None,
        layer_means: None,
        coverage: None,
        token_types: None,
        gdn_fa: None,
        coactivation: None,
        crossing: None,
        decay_bins: decay.bins.len(),
    };

    if opts.skip_compile {
        if let Ok(report) = gdn_fa_compare(
            &sib_profile.same_by_layer,
            &sib_profile.diff_by_layer,
            &config.fa_layer_rule,
        ) {
            bundle.gdn_fa = Some(report::gdn_fa_json(&report));
        }
        let report_path = out_dir.join("report.json");
        std::fs::write(&report_path, serde_json::to_string_pretty(&bundle).unwrap())?;
        println!(
            "analysis (sibling-only) complete in {:.1}s: {} sibling pairs, outputs in {}",
            started.elapsed().as_secs_f64(),
            sibling_pairs.len(),
            out_dir.display()
        );
        return Ok((bundle, report_path));
    }

    let compiler = CompilerCmd::new(
        opts.compiler.as_deref().unwrap_or(CompilerCmd::default().template()),
    );
    let grouping = run_grouping(&store, &compiler)?;
    report::write_groups_csv(&out_dir.join("groups.csv"), &grouping.summaries, &header)?;
    std::fs::write(
        out_dir.join("groups.svg"),
        svg::bar_chart(
            "assembly-equivalent group sizes",
            &grouping.groups.iter().map(O0Group::size).collect::<Vec<_>>(),
        ),
    )?;

    let memberships: Vec<Vec<NodeId>> =
        grouping.groups.iter().map(|g| g.members.clone()).collect();
    let pair_cfg = PairSampleConfig { seed, between_cap: opts.pair_cap, ..Default::default() };
    let pairs = sample_pairs(&memberships, &pair_cfg);
    let table = layer_condition_stats(&store, &pairs, &REPORT_LAYERS).map_err(|e| match e {
        MetricsError::InsufficientData(msg) => CliError::InsufficientData(msg),
        other => CliError::Internal(other.to_string()),
    })?;
    report::write_layer_condition_csv(&out_dir.join("layer_condition.csv"), &table, &header, false)?;
    report::write_layer_condition_csv(
        &out_dir.join("layer_condition_report.csv"),
        &table,
        &header,
        true,
    )?;
    let (same_curve, diff_curve) = pooled_kind_curves(&table);
    std::fs::write(
        out_dir.join("layers.svg"),
        svg::line_chart(
            "layer-wise routing similarity",
            "layer",
            &[
                svg::Series { label: "W-same", color: "royalblue", values: table.mean_by_layer(0) },
                svg::Series { label: "W-diff", color: "darkorange", values: table.mean_by_layer(1) },
                svg::Series { label: "B-same", color: "teal", values: table.mean_by_layer(2) },
                svg::Series { label: "B-diff", color: "peru", values: table.mean_by_layer(3) },
                svg::Series { label: "all", color: "purple", values: table.all_pairs.clone() },
            ],
            Some(baseline),
        ),
    )?;

    let token_stats = token_type_stats(&store, &pairs.within, false);
    report::write_token_type_csv(&out_dir.join("token_type.csv"), &token_stats, &header)?;

    let coact_layer = argmax_finite(&diff_curve).unwrap_or(0);
    let completed: Vec<&trace_model::GenNode> = store.completed_nodes().collect();
    let matrix =
        coactivation_matrix(completed.iter().copied(), coact_layer, config.n_routed_experts);
    report::write_coactivation_csv(
        &out_dir.join(format!("coactivation_l{coact_layer}.csv")),
        &out_dir.join(format!("coactivation_l{coact_layer}_order.csv")),
        &matrix,
        &header,
    )?;
    std::fs::write(
        out_dir.join(format!("coactivation_l{coact_layer}.svg")),
        svg::heatmap(
            &format!("expert co-activation, layer {coact_layer}"),
            matrix.n_experts,
            |i, j| matrix.at(i, j),
            &matrix.order,
        ),
    )?;

    let gdn_fa = gdn_fa_compare(&same_curve, &diff_curve, &config.fa_layer_rule).ok();
    let effective = effective_experts(&matrix.activations).ok().unwrap_or(f64::NAN);

    bundle.target_triple = grouping.target_triple.clone();
    bundle.groups = Some(grouping.distribution);
    bundle.layer_means = Some(serde_json::json!({
        "w_same": table.mean_all_layers[0],
        "w_diff": table.mean_all_layers[1],
        "b_same": table.mean_all_layers[2],
        "b_diff": table.mean_all_layers[3],
        "all_pairs": table.all_pairs_mean_all_layers,
        "report_subset": {
            "w_same": table.mean_report_layers[0],
            "w_diff": table.mean_report_layers[1],
            "b_same": table.mean_report_layers[2],
            "b_diff": table.mean_report_layers[3],
        },
        "counts": table.counts,
    }));
    bundle.coverage = Some(table.coverage);
    bundle.token_types = Some(serde_json::to_value(&token_stats.rows).unwrap());
    bundle.gdn_fa = gdn_fa.as_ref().map(report::gdn_fa_json);
    bundle.coactivation = Some(CoactSummary {
        layer: coact_layer,
        positions: matrix.positions,
        top_experts: matrix.order.iter().take(5).copied().collect(),
        top_activations: matrix
            .order
            .iter()
            .take(5)
            .map(|&e| matrix.activations[e as usize])
            .collect(),
        zero_pair_fraction: matrix.zero_pair_fraction,
        effective_experts: effective,
    });
    bundle.crossing = Some(CrossingDiagnostics {
        same_tok_peak_layer: argmax_finite(&same_curve),
        diff_tok_peak_layer: argmax_finite(&diff_curve),
        random_baseline: baseline,
    });

    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&bundle).unwrap())?;
    println!(
        "analysis complete in {:.1}s: {} compiled into {} groups, {} sibling pairs, outputs in {}",
        started.elapsed().as_secs_f64(),
        bundle.groups.as_ref().map(|g| g.compiled).unwrap_or(0),
        bundle.groups.as_ref().map(|g| g.n_groups).unwrap_or(0),
        sibling_pairs.len(),
        out_dir.display()
    );
    Ok((bundle, report_path))
}

/// Starts the deterministic mock endpoint and serves until interrupted.
pub async fn cmd_serve_mock(
    cfg: mock_moe::MockConfig,
    addr: std::net::SocketAddr,
) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let scripted = cfg.has_scripted_states();
    mock_moe::serve(std::sync::Arc::new(cfg), addr, move |bound| {
        println!("mock endpoint listening on http://{bound}");
        if scripted {
            println!("scripted-logprobs mode active");
        }
    })
    .await
    .map_err(|e| CliError::Endpoint(format!("cannot serve on {addr}: {e}")))
}
