use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("expected {expected} expert IDs, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("row at token {token}, layer {layer} has length {got}, expected {slots}")]
    RaggedRow { token: usize, layer: usize, got: usize, slots: usize },
    #[error("expert ID {id} at token {token}, layer {layer} out of range [0, {n_experts})")]
    IdOutOfRange { id: u16, token: usize, layer: usize, n_experts: usize },
    #[error("duplicate expert ID {id} at token {token}, layer {layer}")]
    DuplicateId { id: u16, token: usize, layer: usize },
}

/// Per-token, per-layer routed-expert IDs for one generation.
///
/// Stored flat in token-major order (`[token][layer][slot]`); serialized as
/// nested integer arrays so the JSONL store stays human-readable.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTrace {
    n_tokens: usize,
    n_layers: usize,
    slots: usize,
    experts: Vec<u16>,
}

impl RoutingTrace {
    pub fn empty(n_layers: usize, slots: usize) -> Self {
        RoutingTrace { n_tokens: 0, n_layers, slots, experts: Vec::new() }
    }

    pub fn from_flat(
        n_tokens: usize,
        n_layers: usize,
        slots: usize,
        experts: Vec<u16>,
    ) -> Result<Self, TraceError> {
        let expected = n_tokens * n_layers * slots;
        if experts.len() != expected {
            return Err(TraceError::LengthMismatch { expected, got: experts.len() });
        }
        Ok(RoutingTrace { n_tokens, n_layers, slots, experts })
    }

    /// Appends one token's worth of routing rows (`n_layers` rows of `slots` IDs).
    pub fn push_token(&mut self, rows: &[Vec<u16>]) -> Result<(), TraceError> {
        if rows.len() != self.n_layers {
            return Err(TraceError::RaggedRow {
                token: self.n_tokens,
                layer: rows.len(),
                got: rows.len(),
                slots: self.n_layers,
            });
        }
        for (layer, row) in rows.iter().enumerate() {
            if row.len() != self.slots {
                return Err(TraceError::RaggedRow {
                    token: self.n_tokens,
                    layer,
                    got: row.len(),
                    slots: self.slots,
                });
            }
        }
        for row in rows {
            self.experts.extend_from_slice(row);
        }
        self.n_tokens += 1;
        Ok(())
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// The top-k expert set for one (token, layer) position.
    pub fn row(&self, token: usize, layer: usize) -> &[u16] {
        let base = (token * self.n_layers + layer) * self.slots;
        &self.experts[base..base + self.slots]
    }

    pub fn flat(&self) -> &[u16] {
        &self.experts
    }

    /// Checks ID range and per-row distinctness against the expert-pool size.
    pub fn validate(&self, n_experts: usize) -> Result<(), TraceError> {
        for token in 0..self.n_tokens {
            for layer in 0..self.n_layers {
                let row = self.row(token, layer);
                let mut seen = vec![false; n_experts];
                for &id in row {
                    if (id as usize) >= n_experts {
                        return Err(TraceError::IdOutOfRange { id, token, layer, n_experts });
                    }
                    if seen[id as usize] {
                        return Err(TraceError::DuplicateId { id, token, layer });
                    }
                    seen[id as usize] = true;
                }
            }
        }
        Ok(())
    }
}

impl Serialize for RoutingTrace {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let nested: Vec<Vec<&[u16]>> = (0..self.n_tokens)
            .map(|t| (0..self.n_layers).map(|l| self.row(t, l)).collect())
            .collect();
        #[derive(Serialize)]
        struct Wire<'a> {
            n_layers: usize,
            slots: usize,
            experts: &'a Vec<Vec<&'a [u16]>>,
        }
        Wire { n_layers: self.n_layers, slots: self.slots, experts: &nested }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RoutingTrace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            n_layers: usize,
            slots: usize,
            experts: Vec<Vec<Vec<u16>>>,
        }
        let wire = Wire::deserialize(deserializer)?;
        let n_tokens = wire.experts.len();
        let mut flat = Vec::with_capacity(n_tokens * wire.n_layers * wire.slots);
        for (t, layers) in wire.experts.iter().enumerate() {
            if layers.len() != wire.n_layers {
                return Err(D::Error::custom(format!(
                    "token {t} has {} layers, expected {}",
                    layers.len(),
                    wire.n_layers
                )));
            }
            for (l, row) in layers.iter().enumerate() {
                if row.len() != wire.slots {
                    return Err(D::Error::custom(format!(
                        "token {t} layer {l} has {} slots, expected {}",
                        row.len(),
                        wire.slots
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        Ok(RoutingTrace {
            n_tokens,
            n_layers: wire.n_layers,
            slots: wire.slots,
            experts: flat,
        })
    }
}
