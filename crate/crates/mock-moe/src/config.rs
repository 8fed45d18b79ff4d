use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("state `{0}` has no candidates")]
    EmptyState(String),
    #[error("state `{state}` references unknown next state `{next}`")]
    UnknownNextState { state: String, next: String },
    #[error("state `{state}` uses token {token:?} missing from vocab")]
    UnknownToken { state: String, token: String },
    #[error("state `{state}` candidate {token:?} has non-positive weight {weight}")]
    BadWeight { state: String, token: String, weight: f64 },
    #[error("scripted state `{state}` probabilities sum to {sum}, expected 1")]
    ScriptedSum { state: String, sum: f64 },
    #[error("scripted state `{state}` emit token {token:?} not among its candidates")]
    BadEmit { state: String, token: String },
    #[error("state `{0}` is scripted but has no emit token")]
    MissingEmit(String),
    #[error("lambda has {got} entries, expected n_layers = {want}")]
    LambdaLength { got: usize, want: usize },
    #[error("lambda[{layer}] = {value} outside [0, 1]")]
    LambdaRange { layer: usize, value: f64 },
    #[error("start state `{0}` not defined")]
    MissingStart(String),
    #[error("vocab entry {0:?} duplicated")]
    DuplicateToken(String),
    #[error("slots ({slots}) must be positive and <= n_routed_experts ({n_experts})")]
    BadSlots { slots: usize, n_experts: usize },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file unreadable: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub weight: f64,
    pub next: String,
}

/// One state of the next-token table.
///
/// A scripted state reports its weights verbatim as probabilities (they must
/// sum to 1) and always emits `emit`, letting tests inject exact per-step
/// distributions. A weighted state is normalized, temperature/top-k/top-p
/// processed, and sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDef {
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub scripted: bool,
    #[serde(default)]
    pub emit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub vocab: Vec<String>,
    pub start_state: String,
    pub grammar: BTreeMap<String, StateDef>,
    /// Per-layer mixing weight: 0 routes on token identity alone, 1 on the
    /// rolling context hash alone.
    pub lambda: Vec<f64>,
    pub n_layers: usize,
    pub slots: usize,
    pub n_routed_experts: usize,
    pub seed: u64,
    /// Markers separating the fixed prompt from the generated tail; the tail
    /// after the last marker occurrence is re-parsed through the grammar.
    pub gen_start_markers: Vec<String>,
    /// Rolling context-hash window, in tokens.
    pub context_window: usize,
    /// Cap on reported top-logprob entries when the request asks for more.
    pub max_top_report: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            vocab: Vec::new(),
            start_state: "start".to_string(),
            grammar: BTreeMap::new(),
            lambda: vec![0.5; 40],
            n_layers: 40,
            slots: 8,
            n_routed_experts: 256,
            seed: 0,
            gen_start_markers: vec![
                "</think>\n\n".to_string(),
                "<|im_start|>assistant\n".to_string(),
            ],
            context_window: 16,
            max_top_report: 30,
        }
    }
}

impl MockConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        let cfg: MockConfig = serde_json::from_str(&raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn token_id(&self, text: &str) -> Option<u32> {
        self.vocab.iter().position(|t| t == text).map(|i| i as u32)
    }

    pub fn has_scripted_states(&self) -> bool {
        self.grammar.values().any(|s| s.scripted)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        for tok in &self.vocab {
            if !seen.insert(tok.clone()) {
                return Err(ConfigError::DuplicateToken(tok.clone()));
            }
        }
        if self.slots == 0 || self.slots > self.n_routed_experts {
            return Err(ConfigError::BadSlots { slots: self.slots, n_experts: self.n_routed_experts });
        }
        if self.lambda.len() != self.n_layers {
            return Err(ConfigError::LambdaLength { got: self.lambda.len(), want: self.n_layers });
        }
        for (layer, &v) in self.lambda.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::LambdaRange { layer, value: v });
            }
        }
        if !self.grammar.contains_key(&self.start_state) {
            return Err(ConfigError::MissingStart(self.start_state.clone()));
        }
        for (name, state) in &self.grammar {
            if state.candidates.is_empty() {
                return Err(ConfigError::EmptyState(name.clone()));
            }
            for cand in &state.candidates {
                if self.token_id(&cand.token).is_none() {
                    return Err(ConfigError::UnknownToken {
                        state: name.clone(),
                        token: cand.token.clone(),
                    });
                }
                if !self.grammar.contains_key(&cand.next) {
                    return Err(ConfigError::UnknownNextState {
                        state: name.clone(),
                        next: cand.next.clone(),
                    });
                }
                if cand.weight.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                    return Err(ConfigError::BadWeight {
                        state: name.clone(),
                        token: cand.token.clone(),
                        weight: cand.weight,
                    });
                }
            }
            if state.scripted {
                let emit = state
                    .emit
                    .as_ref()
                    .ok_or_else(|| ConfigError::MissingEmit(name.clone()))?;
                if !state.candidates.iter().any(|c| &c.token == emit) {
                    return Err(ConfigError::BadEmit { state: name.clone(), token: emit.clone() });
                }
                let sum: f64 = state.candidates.iter().map(|c| c.weight).sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(ConfigError::ScriptedSum { state: name.clone(), sum });
                }
            }
        }
        Ok(())
    }
}
