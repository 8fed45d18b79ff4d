use tempfile::TempDir;
use trace_model::{
    compute_node_id, FinishStatus, GenNode, NodeId, RoutingTrace, RunConfig, RunStore, StoreWriter,
};

/// Builds one synthetic completed node whose routing rows come from the mock
/// routing model: each position's context is the window of preceding token
/// IDs, exactly as the generator would roll it.
pub fn routed_node(
    run_cfg: &RunConfig,
    mock_cfg: &mock_moe::MockConfig,
    token_ids: &[u32],
    tag: &str,
) -> GenNode {
    let mut trace =
        RoutingTrace::empty(run_cfg.n_layers, run_cfg.routed_experts_per_layer);
    let mut context: Vec<u32> = Vec::new();
    for &tok in token_ids {
        let ctx = mock_moe::context_hash(&context, mock_cfg.context_window);
        let rows: Vec<Vec<u16>> = (0..run_cfg.n_layers)
            .map(|layer| mock_moe::synth_routing(tok, layer, ctx, mock_cfg))
            .collect();
        trace.push_token(&rows).unwrap();
        context.push(tok);
    }
    GenNode {
        node_id: NodeId(format!("{:0>16}", tag)),
        parent_id: None,
        branch_step: None,
        forced_token_id: None,
        forced_token_text: None,
        prefix_text: String::new(),
        gen_token_ids: token_ids.to_vec(),
        gen_token_texts: token_ids.iter().map(|t| format!("t{t} ")).collect(),
        top_logprobs: token_ids.iter().map(|_| vec![(0u32, -0.5f64)]).collect(),
        trace,
        finish: FinishStatus::Completed,
    }
}

/// Assembles a finalized store from prebuilt root-less nodes by chaining them
/// under a trivial root so the tree invariant holds.
pub fn store_of(run_cfg: &RunConfig, mut nodes: Vec<GenNode>) -> (TempDir, RunStore) {
    let dir = TempDir::new().unwrap();
    let writer = StoreWriter::create(dir.path(), run_cfg.clone()).unwrap();
    let root_id = compute_node_id(None, None, None, None);
    for (i, node) in nodes.iter_mut().enumerate() {
        if i == 0 {
            node.node_id = root_id.clone();
        } else {
            node.parent_id = Some(root_id.clone());
            node.branch_step = Some(0);
            node.forced_token_id = Some(node.gen_token_ids[0]);
            node.forced_token_text = Some(node.gen_token_texts[0].clone());
        }
        writer.store_node(node.clone()).unwrap();
    }
    let store = writer.finalize(0.0, false, 1).unwrap();
    (dir, store)
}

pub fn run_cfg_256() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.n_layers = 40;
    cfg.routed_experts_per_layer = 8;
    cfg.n_routed_experts = 256;
    cfg
}

pub fn mock_cfg_with_lambda(lambda: Vec<f64>, seed: u64) -> mock_moe::MockConfig {
    let mut cfg = mock_moe::MockConfig::default();
    cfg.n_layers = lambda.len();
    cfg.lambda = lambda;
    cfg.slots = 8;
    cfg.n_routed_experts = 256;
    cfg.seed = seed;
    cfg
}
