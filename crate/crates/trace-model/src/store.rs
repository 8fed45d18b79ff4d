use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

use crate::config::RunConfig;
use crate::node::{DecisionPoint, FinishStatus, GenNode, NodeId, SiblingPair};

pub const NODES_FILE: &str = "nodes.jsonl";
pub const DPS_FILE: &str = "decision_points.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("parent node {0} not found in store")]
    DanglingParent(NodeId),
    #[error("trace shape mismatch for node {node}: {detail}")]
    TraceDimMismatch { node: NodeId, detail: String },
    #[error("node {node} fails invariants: {detail}")]
    InvalidNode { node: NodeId, detail: String },
    #[error("store corrupted: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Run metadata written next to the node log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub started_at_epoch_secs: u64,
    pub wall_secs: f64,
    pub completed: u64,
    pub truncated: u64,
    pub errors: u64,
    pub forks_scheduled: u64,
    pub decision_points: u64,
    pub retok_mismatches: u64,
    pub timeout_hit: bool,
    pub peak_in_flight: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl Manifest {
    fn new(config: &RunConfig) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Manifest {
            started_at_epoch_secs: started,
            wall_secs: 0.0,
            completed: 0,
            truncated: 0,
            errors: 0,
            forks_scheduled: 0,
            decision_points: 0,
            retok_mismatches: 0,
            timeout_hit: false,
            peak_in_flight: 0,
            seed: config.seed,
            config_hash: config.config_hash(),
        }
    }

    pub fn analyzed_nodes(&self) -> u64 {
        self.completed
    }
}

struct WriterInner {
    nodes: BTreeMap<NodeId, GenNode>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    root: Option<NodeId>,
    manifest: Manifest,
    node_log: BufWriter<File>,
    dp_log: BufWriter<File>,
}

/// Append-only writer for an in-progress run.
///
/// All appends funnel through one internal lock so completion callbacks may
/// call `store_node` concurrently. `finalize` flushes, writes the manifest,
/// and hands back the immutable read view.
pub struct StoreWriter {
    dir: PathBuf,
    config: RunConfig,
    inner: Mutex<WriterInner>,
}

impl StoreWriter {
    pub fn create(dir: &Path, config: RunConfig) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let node_log = BufWriter::new(
            OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(NODES_FILE))?,
        );
        let dp_log = BufWriter::new(
            OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(DPS_FILE))?,
        );
        let manifest = Manifest::new(&config);
        Ok(StoreWriter {
            dir: dir.to_path_buf(),
            config,
            inner: Mutex::new(WriterInner {
                nodes: BTreeMap::new(),
                children: BTreeMap::new(),
                root: None,
                manifest,
                node_log,
                dp_log,
            }),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Appends a node. Idempotent on an already-stored node ID.
    pub fn store_node(&self, node: GenNode) -> Result<NodeId, StoreError> {
        node.check_invariants()
            .map_err(|detail| StoreError::InvalidNode { node: node.node_id.clone(), detail })?;
        if node.trace.n_layers() != self.config.n_layers
            || node.trace.slots() != self.config.routed_experts_per_layer
        {
            return Err(StoreError::TraceDimMismatch {
                node: node.node_id.clone(),
                detail: format!(
                    "trace is {}x{} per token, config wants {}x{}",
                    node.trace.n_layers(),
                    node.trace.slots(),
                    self.config.n_layers,
                    self.config.routed_experts_per_layer
                ),
            });
        }
        node.trace.validate(self.config.n_routed_experts).map_err(|e| {
            StoreError::TraceDimMismatch { node: node.node_id.clone(), detail: e.to_string() }
        })?;

        let mut inner = self.inner.lock().expect("store lock");
        if inner.nodes.contains_key(&node.node_id) {
            return Ok(node.node_id);
        }
        match &node.parent_id {
            None => {
                if inner.root.is_some() {
                    return Err(StoreError::InvalidNode {
                        node: node.node_id.clone(),
                        detail: "second root node".to_string(),
                    });
                }
                inner.root = Some(node.node_id.clone());
            }
            Some(parent) => {
                if !inner.nodes.contains_key(parent) {
                    return Err(StoreError::DanglingParent(parent.clone()));
                }
                let child = node.node_id.clone();
                inner.children.entry(parent.clone()).or_default().push(child);
            }
        }
        match node.finish {
            FinishStatus::Completed => inner.manifest.completed += 1,
            FinishStatus::Truncated => inner.manifest.truncated += 1,
            FinishStatus::Error => inner.manifest.errors += 1,
        }
        let line = serde_json::to_string(&node)?;
        writeln!(inner.node_log, "{line}")?;
        let id = node.node_id.clone();
        inner.nodes.insert(id.clone(), node);
        Ok(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.inner.lock().expect("store lock").nodes.contains_key(id)
    }

    /// Reads a stored node under the writer lock.
    pub fn with_node<R>(&self, id: &NodeId, f: impl FnOnce(&GenNode) -> R) -> Option<R> {
        let inner = self.inner.lock().expect("store lock");
        inner.nodes.get(id).map(f)
    }

    pub fn append_decision_point(&self, dp: &DecisionPoint) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().expect("store lock");
        let line = serde_json::to_string(dp)?;
        writeln!(inner.dp_log, "{line}")?;
        inner.manifest.decision_points += 1;
        Ok(())
    }

    pub fn note_fork_scheduled(&self) {
        self.inner.lock().expect("store lock").manifest.forks_scheduled += 1;
    }

    pub fn note_retok_mismatch(&self) {
        self.inner.lock().expect("store lock").manifest.retok_mismatches += 1;
    }

    /// Flushes logs, records final run stats, writes the manifest, and
    /// returns the immutable store.
    pub fn finalize(
        self,
        wall_secs: f64,
        timeout_hit: bool,
        peak_in_flight: usize,
    ) -> Result<RunStore, StoreError> {
        let mut inner = self.inner.into_inner().expect("store lock");
        inner.manifest.wall_secs = wall_secs;
        inner.manifest.timeout_hit = timeout_hit;
        inner.manifest.peak_in_flight = peak_in_flight;
        inner.node_log.flush()?;
        inner.dp_log.flush()?;
        let manifest_json = serde_json::to_string_pretty(&inner.manifest)?;
        std::fs::write(self.dir.join(MANIFEST_FILE), manifest_json)?;
        let store = RunStore {
            config: self.config,
            nodes: inner.nodes,
            children: inner.children,
            root: inner.root,
            manifest: inner.manifest,
        };
        store.check_tree()?;
        Ok(store)
    }
}

/// Finalized, immutable view of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStore {
    config: RunConfig,
    nodes: BTreeMap<NodeId, GenNode>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    root: Option<NodeId>,
    manifest: Manifest,
}

impl RunStore {
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let config_path = dir.join("config.json");
        let config: RunConfig = if config_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(config_path)?)?
        } else {
            RunConfig::default()
        };
        let mut nodes = BTreeMap::new();
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut root = None;
        let reader = BufReader::new(File::open(dir.join(NODES_FILE))?);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let node: GenNode = serde_json::from_str(&line)?;
            node.check_invariants()
                .map_err(|detail| StoreError::InvalidNode { node: node.node_id.clone(), detail })?;
            if node.trace.n_layers() != config.n_layers
                || node.trace.slots() != config.routed_experts_per_layer
            {
                return Err(StoreError::TraceDimMismatch {
                    node: node.node_id.clone(),
                    detail: format!(
                        "trace is {}x{} per token, config wants {}x{}",
                        node.trace.n_layers(),
                        node.trace.slots(),
                        config.n_layers,
                        config.routed_experts_per_layer
                    ),
                });
            }
            match &node.parent_id {
                None => {
                    if root.is_some() {
                        return Err(StoreError::Corrupt("multiple root nodes".to_string()));
                    }
                    root = Some(node.node_id.clone());
                }
                Some(parent) => {
                    children.entry(parent.clone()).or_default().push(node.node_id.clone());
                }
            }
            nodes.insert(node.node_id.clone(), node);
        }
        let store = RunStore { config, nodes, children, root, manifest };
        store.check_tree()?;
        Ok(store)
    }

    /// Writes config.json alongside the node log so `load` round-trips it.
    pub fn save_config(dir: &Path, config: &RunConfig) -> Result<(), StoreError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> Option<&NodeId> {
        self.root.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<&GenNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GenNode> {
        self.nodes.values()
    }

    /// Completed nodes only: truncated and errored generations are stored for
    /// accounting but excluded from every analysis.
    pub fn completed_nodes(&self) -> impl Iterator<Item = &GenNode> {
        self.nodes.values().filter(|n| n.finish == FinishStatus::Completed)
    }

    pub fn children_of(&self, id: &NodeId) -> &[NodeId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    fn check_tree(&self) -> Result<(), StoreError> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| StoreError::Corrupt("non-empty store with no root".to_string()))?;
        let mut visited = std::collections::BTreeSet::new();
        let mut stack = vec![root.clone()];
        while let Some(id) = stack.pop() {
            if !visited.insert(id.clone()) {
                return Err(StoreError::Corrupt(format!("cycle through node {id}")));
            }
            for child in self.children_of(&id) {
                stack.push(child.clone());
            }
        }
        if visited.len() != self.nodes.len() {
            return Err(StoreError::Corrupt(format!(
                "{} of {} nodes unreachable from root",
                self.nodes.len() - visited.len(),
                self.nodes.len()
            )));
        }
        Ok(())
    }

    /// Every (parent, forked child) pair where both generations completed,
    /// ordered by (node_a, node_b).
    pub fn extract_sibling_pairs(&self) -> Vec<SiblingPair> {
        let mut pairs = Vec::new();
        for (parent_id, kids) in &self.children {
            let Some(parent) = self.nodes.get(parent_id) else { continue };
            if parent.finish != FinishStatus::Completed {
                continue;
            }
            for child_id in kids {
                let Some(child) = self.nodes.get(child_id) else { continue };
                if child.finish != FinishStatus::Completed {
                    continue;
                }
                pairs.push(SiblingPair {
                    node_a: parent_id.clone(),
                    node_b: child_id.clone(),
                    fork_step: child.branch_step.expect("non-root child has branch_step"),
                });
            }
        }
        pairs.sort_by(|x, y| (&x.node_a, &x.node_b).cmp(&(&y.node_a, &y.node_b)));
        pairs
    }

    /// The complete generated text of a node: everything after the shared
    /// root prompt (inherited forked prefix plus the node's own tokens). This
    /// is the full program a completed node produced; `gen_token_texts` alone
    /// holds only the post-fork tail.
    pub fn generated_text(&self, id: &NodeId) -> Result<String, StoreError> {
        let node =
            self.nodes.get(id).ok_or_else(|| StoreError::Corrupt(format!("node {id} missing")))?;
        let root_id = self
            .root
            .as_ref()
            .ok_or_else(|| StoreError::Corrupt("store has no root".to_string()))?;
        let root = self
            .nodes
            .get(root_id)
            .ok_or_else(|| StoreError::Corrupt("root node missing".to_string()))?;
        let base = &root.prefix_text;
        if !node.prefix_text.starts_with(base.as_str()) {
            return Err(StoreError::Corrupt(format!(
                "node {id} prefix does not extend the root prompt"
            )));
        }
        let mut out = node.prefix_text[base.len()..].to_string();
        for text in &node.gen_token_texts {
            out.push_str(text);
        }
        Ok(out)
    }

    /// Rebuilds a node's prompt from its ancestry: root prefix, then along
    /// each edge the parent's generated tokens up to the branch step followed
    /// by the forced token.
    pub fn reconstruct_prefix(&self, id: &NodeId) -> Result<String, StoreError> {
        let mut chain = Vec::new();
        let mut cursor = id.clone();
        loop {
            let node = self
                .nodes
                .get(&cursor)
                .ok_or_else(|| StoreError::Corrupt(format!("node {cursor} missing")))?;
            chain.push(node);
            if chain.len() > self.nodes.len() {
                return Err(StoreError::Corrupt(format!("ancestry cycle through {id}")));
            }
            match &node.parent_id {
                None => break,
                Some(parent) => cursor = parent.clone(),
            }
        }
        chain.reverse();
        let mut prefix = chain[0].prefix_text.clone();
        for pair in chain.windows(2) {
            let (parent, child) = (pair[0], pair[1]);
            let step = child.branch_step.expect("non-root child has branch_step");
            if step > parent.gen_token_texts.len() {
                return Err(StoreError::Corrupt(format!(
                    "branch step {step} beyond parent length {}",
                    parent.gen_token_texts.len()
                )));
            }
            for text in &parent.gen_token_texts[..step] {
                prefix.push_str(text);
            }
            prefix.push_str(child.forced_token_text.as_deref().unwrap_or(""));
        }
        Ok(prefix)
    }
}
