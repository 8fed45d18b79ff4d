use std::net::SocketAddr;
use std::sync::Arc;

use moe_trace::{cmd_analyze, cmd_run, AnalyzeOptions, CliError, RunOptions, REPORT_SCHEMA_VERSION};
use tempfile::TempDir;
use trace_model::RunConfig;

async fn spawn_mock(cfg: mock_moe::MockConfig) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, mock_moe::router(Arc::new(cfg))).await.unwrap();
    });
    addr
}

async fn scripted_store(seed: u64) -> (TempDir, std::path::PathBuf) {
    let mock = mock_moe::scripted_three_way_root(seed);
    let addr = spawn_mock(mock.clone()).await;
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.endpoint_url = format!("http://{addr}");
    cfg.n_layers = mock.n_layers;
    cfg.routed_experts_per_layer = mock.slots;
    cfg.n_routed_experts = mock.n_routed_experts;
    cfg.seed = seed;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let store = dir.path().join("store");
    cmd_run(Some(&cfg_path), &store, &RunOptions::default()).await.unwrap();
    (dir, store)
}

#[tokio::test(flavor = "multi_thread")]
async fn profile_file_is_honored_and_dp_log_written() {
    let mock = mock_moe::scripted_three_way_root(77);
    let addr = spawn_mock(mock.clone()).await;
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.endpoint_url = format!("http://{addr}");
    cfg.n_layers = mock.n_layers;
    cfg.routed_experts_per_layer = mock.slots;
    cfg.n_routed_experts = mock.n_routed_experts;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();

    // a partial profile overriding one field with its own default value
    let profile_path = dir.path().join("profile.json");
    std::fs::write(&profile_path, r#"{"resp_routed_experts_path": "meta_info.routed_experts"}"#)
        .unwrap();
    let store = dir.path().join("store");
    let opts = RunOptions { profile: Some(profile_path.clone()), ..RunOptions::default() };
    let summary = cmd_run(Some(&cfg_path), &store, &opts).await.unwrap();
    assert_eq!(summary.nodes_total, 4);

    // each decision point was logged for offline replay
    let dp_log = std::fs::read_to_string(store.join("decision_points.jsonl")).unwrap();
    let dps: Vec<trace_model::DecisionPoint> =
        dp_log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(dps.len(), 1);
    assert_eq!(dps[0].candidates.len(), 3);
    assert!(dps[0].cumulative_prob <= 0.40);

    // an unreadable profile is a config error
    let opts = RunOptions { profile: Some(dir.path().join("missing.json")), ..RunOptions::default() };
    let err = cmd_run(Some(&cfg_path), &dir.path().join("s2"), &opts).await.unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
}

#[test]
fn exit_codes_map_error_kinds() {
    assert_eq!(CliError::Config("x".into()).exit_code(), 2);
    assert_eq!(CliError::Endpoint("x".into()).exit_code(), 3);
    assert_eq!(CliError::InsufficientData("x".into()).exit_code(), 4);
}

#[tokio::test(flavor = "multi_thread")]
async fn run_rejects_bad_config_files() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let err = cmd_run(Some(&bad), &dir.path().join("out"), &RunOptions::default()).await.unwrap_err();
    assert!(matches!(err, CliError::Config(_)));

    // structurally valid JSON, semantically invalid threshold
    let cfg = r#"{"p_target": 1.5}"#;
    std::fs::write(&bad, cfg).unwrap();
    let err = cmd_run(Some(&bad), &dir.path().join("out"), &RunOptions::default()).await.unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
}

#[tokio::test(flavor = "multi_thread")]
async fn run_against_dead_endpoint_is_an_endpoint_error() {
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.endpoint_url = format!("http://{dead}");
    cfg.n_layers = 2;
    cfg.routed_experts_per_layer = 2;
    cfg.n_routed_experts = 8;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let err =
        cmd_run(Some(&cfg_path), &dir.path().join("out"), &RunOptions::default()).await.unwrap_err();
    assert!(matches!(err, CliError::Endpoint(_)), "got {err:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn analyze_missing_or_empty_store_is_insufficient_data() {
    let dir = TempDir::new().unwrap();
    let err = cmd_analyze(
        &dir.path().join("nope"),
        &dir.path().join("out"),
        &AnalyzeOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CliError::InsufficientData(_)));
}

#[tokio::test(flavor = "multi_thread")]
async fn skip_compile_falls_back_to_sibling_analysis() {
    let (_dir, store) = scripted_store(91).await;
    let out = TempDir::new().unwrap();
    let opts = AnalyzeOptions { skip_compile: true, ..AnalyzeOptions::default() };
    let (bundle, report_path) = {
        let (store, out_path) = (store.clone(), out.path().to_path_buf());
        tokio::task::spawn_blocking(move || cmd_analyze(&store, &out_path, &opts))
            .await
            .unwrap()
            .unwrap()
    };
    assert!(bundle.skip_compile);
    assert!(bundle.groups.is_none());
    assert!(out.path().join("decay.csv").exists());
    assert!(out.path().join("sibling_layers.csv").exists());
    assert!(!out.path().join("layer_condition.csv").exists());
    assert!(report_path.exists());
}

#[tokio::test(flavor = "multi_thread")]
async fn report_schema_is_versioned_and_round_trips() {
    let (_dir, store) = scripted_store(92).await;
    let out = TempDir::new().unwrap();
    let (bundle, report_path) = {
        let (store, out_path) = (store.clone(), out.path().to_path_buf());
        tokio::task::spawn_blocking(move || {
            cmd_analyze(&store, &out_path, &AnalyzeOptions::default())
        })
        .await
        .unwrap()
        .unwrap()
    };
    assert_eq!(bundle.schema_version, REPORT_SCHEMA_VERSION);
    let raw = std::fs::read_to_string(&report_path).unwrap();
    let parsed: moe_trace::ReportBundle = serde_json::from_str(&raw).unwrap();
    assert_eq!(parsed.schema_version, REPORT_SCHEMA_VERSION);
    assert_eq!(parsed.completed, 4);
    assert_eq!(parsed.sibling_pairs, 3);
    // every table carries the seed and config hash
    for name in ["decay.csv", "sibling_layers.csv", "groups.csv"] {
        let content = std::fs::read_to_string(out.path().join(name)).unwrap();
        let first = content.lines().next().unwrap();
        assert!(first.starts_with("# seed="), "{name}: {first}");
        assert!(first.contains("config_hash="), "{name}: {first}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_sources_form_one_group_covering_everything() {
    use trace_model::{compute_node_id, FinishStatus, GenNode, RoutingTrace, StoreWriter};
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.n_layers = 2;
    cfg.routed_experts_per_layer = 2;
    cfg.n_routed_experts = 8;
    trace_model::RunStore::save_config(dir.path(), &cfg).unwrap();
    let writer = StoreWriter::create(dir.path(), cfg.clone()).unwrap();
    // three nodes whose complete programs are byte-identical: the children
    // fork on the root's trailing newlines
    let source = "int f(void) { return 3; }";
    let root_id = compute_node_id(None, None, None, None);
    let trace_of = |n_tokens: usize| {
        let mut trace = RoutingTrace::empty(2, 2);
        for _ in 0..n_tokens {
            trace.push_token(&[vec![0, 1], vec![2, 3]]).unwrap();
        }
        trace
    };
    let root = GenNode {
        node_id: root_id.clone(),
        parent_id: None,
        branch_step: None,
        forced_token_id: None,
        forced_token_text: None,
        prefix_text: "BASE:".to_string(),
        gen_token_ids: vec![1, 2, 2],
        gen_token_texts: vec![source.to_string(), "\n".to_string(), "\n".to_string()],
        top_logprobs: vec![vec![(1, -0.1)], vec![(2, -0.1)], vec![(2, -0.1)]],
        trace: trace_of(3),
        finish: FinishStatus::Completed,
    };
    writer.store_node(root.clone()).unwrap();
    for (step, n_gen) in [(1usize, 1usize), (2, 0)] {
        let mut prefix = root.prefix_text.clone();
        for t in &root.gen_token_texts[..step] {
            prefix.push_str(t);
        }
        prefix.push('\n');
        let node = GenNode {
            node_id: compute_node_id(Some(&root_id), Some(step), Some(2), Some("\n")),
            parent_id: Some(root_id.clone()),
            branch_step: Some(step),
            forced_token_id: Some(2),
            forced_token_text: Some("\n".to_string()),
            prefix_text: prefix,
            gen_token_ids: vec![2; n_gen],
            gen_token_texts: vec!["\n".to_string(); n_gen],
            top_logprobs: vec![vec![(2, -0.1)]; n_gen],
            trace: trace_of(n_gen),
            finish: FinishStatus::Completed,
        };
        writer.store_node(node).unwrap();
    }
    writer.finalize(0.0, false, 1).unwrap();

    let out = TempDir::new().unwrap();
    let (store_path, out_path) = (dir.path().to_path_buf(), out.path().to_path_buf());
    let (bundle, _) = tokio::task::spawn_blocking(move || {
        cmd_analyze(&store_path, &out_path, &AnalyzeOptions::default())
    })
    .await
    .unwrap()
    .unwrap();
    let groups = bundle.groups.unwrap();
    assert_eq!(groups.n_groups, 1);
    assert_eq!(groups.compiled, 3);
    assert_eq!(groups.singleton_fraction, 0.0);
    assert_eq!(groups.top3_coverage, 1.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn endpoint_env_var_overrides_config() {
    // the variable is process-global: this is the only test that sets it
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    std::env::set_var(moe_trace::ENDPOINT_ENV, format!("http://{dead}"));
    let mock = mock_moe::scripted_three_way_root(5);
    let addr = spawn_mock(mock.clone()).await;
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.endpoint_url = format!("http://{addr}"); // live, but the env points at a dead port
    cfg.n_layers = mock.n_layers;
    cfg.routed_experts_per_layer = mock.slots;
    cfg.n_routed_experts = mock.n_routed_experts;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let err =
        cmd_run(Some(&cfg_path), &dir.path().join("out"), &RunOptions::default()).await.unwrap_err();
    std::env::remove_var(moe_trace::ENDPOINT_ENV);
    assert!(matches!(err, CliError::Endpoint(_)), "env override must win: {err:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn analyze_handles_uncompilable_corpora() {
    // the scripted vocabulary is not C; every extraction succeeds but no
    // source compiles, so grouping reports zero compiled and the layer table
    // is skipped without failing the command
    let (_dir, store) = scripted_store(93).await;
    let out = TempDir::new().unwrap();
    let result = {
        let (store, out_path) = (store.clone(), out.path().to_path_buf());
        tokio::task::spawn_blocking(move || {
            cmd_analyze(&store, &out_path, &AnalyzeOptions::default())
        })
        .await
        .unwrap()
    };
    match result {
        Ok((bundle, _)) => {
            let groups = bundle.groups.unwrap();
            assert_eq!(groups.compiled + groups.compile_failures + groups.extraction_failures, 4);
        }
        Err(CliError::InsufficientData(_)) => {}
        Err(other) => panic!("unexpected error {other:?}"),
    }
}
