use gen_client::FinishReason;
use thiserror::Error;
use trace_model::{DecisionPoint, FinishStatus, GenNode, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("node {node} has an empty top-logprob row at step {step}")]
    EmptyRow { node: NodeId, step: usize },
}

/// Scans per-step top-logprob rows for decision points.
///
/// The candidate set at a step is the maximal descending-probability prefix
/// whose cumulative probability stays at or under `p_target`; the step is a
/// decision point iff that prefix holds at least two candidates. Candidates
/// are truncated to `k_max_forks`.
pub fn detect_decision_points(
    node_id: &NodeId,
    top_logprobs: &[Vec<(u32, f64)>],
    p_target: f64,
    k_max_forks: usize,
) -> Result<Vec<DecisionPoint>, DpError> {
    let mut out = Vec::new();
    for (step, row) in top_logprobs.iter().enumerate() {
        if row.is_empty() {
            return Err(DpError::EmptyRow { node: node_id.clone(), step });
        }
        let mut probs: Vec<(u32, f64)> = row.iter().map(|&(id, lp)| (id, lp.exp())).collect();
        probs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut cum = 0.0;
        let mut prefix = 0usize;
        for &(_, p) in &probs {
            if cum + p > p_target {
                break;
            }
            cum += p;
            prefix += 1;
        }
        if prefix < 2 {
            continue;
        }
        let kept = prefix.min(k_max_forks);
        let cumulative_prob: f64 = probs[..kept].iter().map(|&(_, p)| p).sum();
        out.push(DecisionPoint {
            node_id: node_id.clone(),
            step,
            candidates: probs[..kept].iter().map(|&(id, _)| id).collect(),
            cumulative_prob,
        });
    }
    Ok(out)
}

/// [`detect_decision_points`] over a stored node's recorded rows, for offline
/// replay under alternative thresholds.
pub fn detect_node_decision_points(
    node: &GenNode,
    p_target: f64,
    k_max_forks: usize,
) -> Result<Vec<DecisionPoint>, DpError> {
    detect_decision_points(&node.node_id, &node.top_logprobs, p_target, k_max_forks)
}

pub fn classify_completion(finish: FinishReason) -> FinishStatus {
    match finish {
        FinishReason::Stop => FinishStatus::Completed,
        FinishReason::Length => FinishStatus::Truncated,
        FinishReason::Error => FinishStatus::Error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nid() -> NodeId {
        NodeId("deadbeefdeadbeef".to_string())
    }

    fn row(probs: &[f64]) -> Vec<(u32, f64)> {
        probs.iter().enumerate().map(|(i, &p)| (i as u32, p.ln())).collect()
    }

    /// Remaining probability split across many weak tails so rows look like
    /// real top-30 lists.
    fn row_padded(head: &[f64]) -> Vec<(u32, f64)> {
        let used: f64 = head.iter().sum();
        let mut all = head.to_vec();
        let tail = (1.0 - used) / 24.0;
        all.extend(std::iter::repeat_n(tail, 24));
        row(&all)
    }

    #[test]
    fn two_candidate_prefix_under_threshold_is_a_dp() {
        // 0.20 + 0.15 = 0.35 <= 0.40; adding 0.10 gives 0.45 > 0.40
        let rows = vec![row_padded(&[0.20, 0.15, 0.10])];
        let dps = detect_decision_points(&nid(), &rows, 0.40, 20).unwrap();
        assert_eq!(dps.len(), 1);
        assert_eq!(dps[0].step, 0);
        assert_eq!(dps[0].candidates, vec![0, 1]);
        assert!((dps[0].cumulative_prob - 0.35).abs() < 1e-9);
    }

    #[test]
    fn confident_top_token_is_not_a_dp() {
        let rows = vec![row_padded(&[0.50, 0.30])];
        let dps = detect_decision_points(&nid(), &rows, 0.40, 20).unwrap();
        assert!(dps.is_empty());
    }

    #[test]
    fn single_candidate_prefix_fails_the_two_candidate_rule() {
        // 0.35 fits, 0.35 + 0.30 = 0.65 does not: prefix length 1
        let rows = vec![row_padded(&[0.35, 0.30])];
        let dps = detect_decision_points(&nid(), &rows, 0.40, 20).unwrap();
        assert!(dps.is_empty());
    }

    #[test]
    fn candidates_truncate_to_fork_limit() {
        let flat = vec![0.05; 7]; // prefix of 7 fits under 0.40
        let rows = vec![row_padded(&flat)];
        let dps = detect_decision_points(&nid(), &rows, 0.40, 3).unwrap();
        assert_eq!(dps[0].candidates.len(), 3);
        assert!(dps[0].cumulative_prob <= 0.40);
    }

    #[test]
    fn empty_row_is_malformed() {
        let rows = vec![vec![]];
        assert_eq!(
            detect_decision_points(&nid(), &rows, 0.4, 20),
            Err(DpError::EmptyRow { node: nid(), step: 0 })
        );
    }

    #[test]
    fn classify_maps_finish_reasons() {
        assert_eq!(classify_completion(FinishReason::Stop), FinishStatus::Completed);
        assert_eq!(classify_completion(FinishReason::Length), FinishStatus::Truncated);
        assert_eq!(classify_completion(FinishReason::Error), FinishStatus::Error);
    }
}
