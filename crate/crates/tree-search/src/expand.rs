use std::collections::{BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use gen_client::{build_prefix, GenClient, GenRequest, GenResponse, SamplingParams};
use thiserror::Error;
use tokio::task::JoinSet;
use trace_model::{
    compute_node_id, FinishStatus, GenNode, NodeId, RoutingTrace, RunConfig, RunStore, StoreError,
    StoreWriter,
};

use crate::dp::{classify_completion, detect_decision_points, DpError};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("generation task panicked: {0}")]
    Join(#[from] tokio::task::JoinError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub nodes_total: usize,
    pub completed: u64,
    pub truncated: u64,
    pub errors: u64,
    pub forks_scheduled: u64,
    pub decision_points: u64,
    pub peak_in_flight: usize,
    pub wall: Duration,
    pub timeout_hit: bool,
}

struct ParentLink {
    parent_id: NodeId,
    branch_step: usize,
    forced_token_id: u32,
    forced_token_text: String,
}

struct GenTask {
    node_id: NodeId,
    parent: Option<ParentLink>,
    prefix: String,
    depth: usize,
}

fn sampling_from(config: &RunConfig) -> SamplingParams {
    let mut stop = Vec::new();
    if !config.stop_token.is_empty() {
        stop.push(config.stop_token.clone());
    }
    SamplingParams {
        temperature: config.temperature,
        top_p: config.top_p,
        top_k: config.top_k,
        max_new_tokens: config.max_gen_len,
        stop,
    }
}

/// Expands the generation tree until every decision point is exhausted or the
/// timeout lapses, then drains in-flight requests. Returns the finalized
/// store plus run statistics.
///
/// Scheduling is FIFO over completion events; completion handling (store
/// append and decision-point scan) runs on the scheduler, so appends are
/// naturally serialized while generations proceed concurrently.
pub async fn expand_tree(
    config: &RunConfig,
    client: &GenClient,
    writer: StoreWriter,
) -> Result<(RunStore, RunSummary), TreeError> {
    config.validate().map_err(TreeError::Config)?;
    let start = Instant::now();
    let deadline = start
        .checked_add(Duration::from_secs(config.timeout_secs))
        .unwrap_or_else(|| start + Duration::from_secs(60 * 60 * 24 * 365));
    let sampling = sampling_from(config);

    let root_prefix =
        build_prefix(&config.system_prompt, &config.user_prompt, config.thinking_skip, "");
    let root_id = compute_node_id(None, None, None, None);
    let mut queue = VecDeque::new();
    let mut scheduled: BTreeSet<NodeId> = BTreeSet::new();
    scheduled.insert(root_id.clone());
    queue.push_back(GenTask { node_id: root_id, parent: None, prefix: root_prefix, depth: 0 });

    let mut tasks: JoinSet<(GenTask, Result<GenResponse, gen_client::GenError>)> = JoinSet::new();
    let mut peak_in_flight = 0usize;
    let mut timeout_hit = false;

    loop {
        while tasks.len() < config.max_concurrent && !queue.is_empty() {
            if Instant::now() >= deadline {
                timeout_hit = true;
                queue.clear();
                break;
            }
            let task = queue.pop_front().expect("queue checked non-empty");
            let client = client.clone();
            let request = GenRequest {
                prefix_text: task.prefix.clone(),
                sampling: sampling.clone(),
                return_top_logprobs: 30,
                return_routed_experts: true,
            };
            tasks.spawn(async move {
                let resp = client.generate(&request).await;
                (task, resp)
            });
            peak_in_flight = peak_in_flight.max(tasks.len());
        }
        let Some(joined) = tasks.join_next().await else {
            break;
        };
        let (task, result) = joined?;
        if Instant::now() >= deadline && !queue.is_empty() {
            timeout_hit = true;
            queue.clear();
        }
        handle_outcome(config, &writer, &mut queue, &mut scheduled, task, result)?;
    }

    let wall = start.elapsed();
    let store = writer.finalize(wall.as_secs_f64(), timeout_hit, peak_in_flight)?;
    let manifest = store.manifest().clone();
    let summary = RunSummary {
        nodes_total: store.len(),
        completed: manifest.completed,
        truncated: manifest.truncated,
        errors: manifest.errors,
        forks_scheduled: manifest.forks_scheduled,
        decision_points: manifest.decision_points,
        peak_in_flight,
        wall,
        timeout_hit,
    };
    Ok((store, summary))
}

fn handle_outcome(
    config: &RunConfig,
    writer: &StoreWriter,
    queue: &mut VecDeque<GenTask>,
    scheduled: &mut BTreeSet<NodeId>,
    task: GenTask,
    result: Result<GenResponse, gen_client::GenError>,
) -> Result<(), TreeError> {
    let (parent_id, branch_step, forced_token_id, forced_token_text) = match &task.parent {
        None => (None, None, None, None),
        Some(link) => (
            Some(link.parent_id.clone()),
            Some(link.branch_step),
            Some(link.forced_token_id),
            Some(link.forced_token_text.clone()),
        ),
    };

    let (node, response) = match result {
        Ok(resp) => {
            let finish = classify_completion(resp.finish_reason);
            match (finish, resp.trace.clone()) {
                (FinishStatus::Error, _) | (_, None) => (
                    error_node(config, &task, parent_id, branch_step, forced_token_id, forced_token_text),
                    None,
                ),
                (finish, Some(trace)) => {
                    let node = GenNode {
                        node_id: task.node_id.clone(),
                        parent_id,
                        branch_step,
                        forced_token_id,
                        forced_token_text,
                        prefix_text: task.prefix.clone(),
                        gen_token_ids: resp.token_ids.clone(),
                        gen_token_texts: resp.token_texts.clone(),
                        top_logprobs: resp
                            .top_logprobs
                            .iter()
                            .map(|row| row.iter().map(|c| (c.token_id, c.logprob)).collect())
                            .collect(),
                        trace,
                        finish,
                    };
                    (node, Some(resp))
                }
            }
        }
        Err(err) => {
            tracing::warn!(node = %task.node_id, error = %err, "generation failed");
            (
                error_node(config, &task, parent_id, branch_step, forced_token_id, forced_token_text),
                None,
            )
        }
    };

    check_retokenization(config, writer, &task, &node);
    writer.store_node(node.clone())?;

    let mut n_dps = 0usize;
    if node.finish == FinishStatus::Completed {
        if let Some(resp) = &response {
            let dps = detect_decision_points(
                &node.node_id,
                &node.top_logprobs,
                config.p_target,
                config.k_max_forks,
            )?;
            n_dps = dps.len();
            for dp in &dps {
                writer.append_decision_point(dp)?;
            }
            for dp in dps {
                for &cand_id in &dp.candidates {
                    if !config.fork_includes_sampled && node.gen_token_ids[dp.step] == cand_id {
                        continue;
                    }
                    let cand_text = resp.top_logprobs[dp.step]
                        .iter()
                        .find(|c| c.token_id == cand_id)
                        .and_then(|c| c.text.clone());
                    let Some(cand_text) = cand_text else {
                        tracing::warn!(
                            node = %node.node_id,
                            step = dp.step,
                            token = cand_id,
                            "candidate has no detokenized text; cannot force"
                        );
                        continue;
                    };
                    let child_id = compute_node_id(
                        Some(&node.node_id),
                        Some(dp.step),
                        Some(cand_id),
                        Some(&cand_text),
                    );
                    if !scheduled.insert(child_id.clone()) {
                        continue;
                    }
                    let mut prefix = node.prefix_text.clone();
                    for text in &node.gen_token_texts[..dp.step] {
                        prefix.push_str(text);
                    }
                    prefix.push_str(&cand_text);
                    writer.note_fork_scheduled();
                    queue.push_back(GenTask {
                        node_id: child_id,
                        parent: Some(ParentLink {
                            parent_id: node.node_id.clone(),
                            branch_step: dp.step,
                            forced_token_id: cand_id,
                            forced_token_text: cand_text,
                        }),
                        prefix,
                        depth: task.depth + 1,
                    });
                }
            }
        }
    }
    tracing::info!(
        node = %node.node_id,
        depth = task.depth,
        finish = ?node.finish,
        n_tokens = node.n_tokens(),
        n_dps,
        "node stored"
    );
    Ok(())
}

fn error_node(
    config: &RunConfig,
    task: &GenTask,
    parent_id: Option<NodeId>,
    branch_step: Option<usize>,
    forced_token_id: Option<u32>,
    forced_token_text: Option<String>,
) -> GenNode {
    GenNode {
        node_id: task.node_id.clone(),
        parent_id,
        branch_step,
        forced_token_id,
        forced_token_text,
        prefix_text: task.prefix.clone(),
        gen_token_ids: Vec::new(),
        gen_token_texts: Vec::new(),
        top_logprobs: Vec::new(),
        trace: RoutingTrace::empty(config.n_layers, config.routed_experts_per_layer),
        finish: FinishStatus::Error,
    }
}

/// When a fork re-used the parent's own sampled token, the child's first
/// logprob row must match the parent's row right after the branch step; a
/// disagreement means the forced text re-tokenized differently server-side.
fn check_retokenization(config: &RunConfig, writer: &StoreWriter, task: &GenTask, node: &GenNode) {
    if !config.fork_includes_sampled {
        return;
    }
    let Some(link) = &task.parent else { return };
    let parent_top = match writer.with_node(&link.parent_id, |p| {
        if p.gen_token_ids.get(link.branch_step) == Some(&link.forced_token_id) {
            p.top_logprobs.get(link.branch_step + 1).cloned()
        } else {
            None
        }
    }) {
        Some(Some(row)) => row,
        _ => return,
    };
    let parent_first = parent_top.first().map(|&(id, _)| id);
    let child_first = node.top_logprobs.first().and_then(|r| r.first()).map(|&(id, _)| id);
    if let (Some(p), Some(c)) = (parent_first, child_first) {
        if p != c {
            writer.note_retok_mismatch();
        }
    }
}
