use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Predicate selecting the full-attention layers by index.
///
/// The default (`index % 4 == 3`) marks every fourth MoE layer as preceded by
/// a full-attention block; the rest are preceded by linear-attention blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaLayerRule {
    pub modulus: usize,
    pub remainder: usize,
}

impl Default for FaLayerRule {
    fn default() -> Self {
        FaLayerRule { modulus: 4, remainder: 3 }
    }
}

impl FaLayerRule {
    pub fn is_fa(&self, layer: usize) -> bool {
        self.modulus != 0 && layer % self.modulus == self.remainder
    }

    pub fn fa_layers(&self, n_layers: usize) -> Vec<usize> {
        (0..n_layers).filter(|&l| self.is_fa(l)).collect()
    }
}

/// Parameters of one tree-search generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub endpoint_url: String,
    pub system_prompt: String,
    pub user_prompt: String,
    /// Cumulative-probability threshold for decision points.
    pub p_target: f64,
    /// Maximum children forked per decision point.
    pub k_max_forks: usize,
    pub timeout_secs: u64,
    pub max_concurrent: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: usize,
    pub max_gen_len: usize,
    pub n_layers: usize,
    pub routed_experts_per_layer: usize,
    pub n_routed_experts: usize,
    pub fa_layer_rule: FaLayerRule,
    pub stop_token: String,
    pub thinking_skip: bool,
    /// When false, the candidate equal to the parent's own sampled token is
    /// not forked: the parent's continuation already covers it.
    pub fork_includes_sampled: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            endpoint_url: "http://127.0.0.1:30000".to_string(),
            system_prompt: "You are a coding assistant.".to_string(),
            user_prompt: "Write a small C function. Output code only.".to_string(),
            p_target: 0.40,
            k_max_forks: 20,
            timeout_secs: 1800,
            max_concurrent: 50,
            temperature: 0.7,
            top_p: 0.95,
            top_k: 20,
            max_gen_len: 2048,
            n_layers: 40,
            routed_experts_per_layer: 8,
            n_routed_experts: 256,
            fa_layer_rule: FaLayerRule::default(),
            stop_token: "</function>".to_string(),
            thinking_skip: true,
            fork_includes_sampled: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(format!("p_target must be in (0, 1), got {}", self.p_target));
        }
        if self.k_max_forks < 2 {
            return Err(format!("k_max_forks must be >= 2, got {}", self.k_max_forks));
        }
        if self.routed_experts_per_layer > self.n_routed_experts {
            return Err(format!(
                "routed_experts_per_layer ({}) exceeds n_routed_experts ({})",
                self.routed_experts_per_layer, self.n_routed_experts
            ));
        }
        if self.routed_experts_per_layer == 0 || self.n_layers == 0 {
            return Err("n_layers and routed_experts_per_layer must be positive".to_string());
        }
        if self.n_routed_experts > u16::MAX as usize {
            return Err(format!("n_routed_experts {} exceeds u16 range", self.n_routed_experts));
        }
        if self.max_concurrent == 0 {
            return Err("max_concurrent must be positive".to_string());
        }
        if self.temperature <= 0.0 {
            return Err(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.max_gen_len == 0 {
            return Err("max_gen_len must be positive".to_string());
        }
        Ok(())
    }

    /// Stable hash of the full config, cross-referenced by every report table.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}
