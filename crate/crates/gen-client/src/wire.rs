use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use trace_model::RoutingTrace;

use crate::codec::{decode_routed_experts, CodecError};
use crate::profile::{lookup, EndpointProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: usize,
    pub max_new_tokens: usize,
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub prefix_text: String,
    pub sampling: SamplingParams,
    /// Number of top candidates to return per decode step (default 30).
    pub return_top_logprobs: usize,
    pub return_routed_experts: bool,
}

impl GenRequest {
    pub fn to_body(&self, profile: &EndpointProfile) -> Value {
        json!({
            profile.text_field.clone(): self.prefix_text,
            profile.sampling_field.clone(): {
                profile.temperature_field.clone(): self.sampling.temperature,
                profile.top_p_field.clone(): self.sampling.top_p,
                profile.top_k_field.clone(): self.sampling.top_k,
                profile.max_new_tokens_field.clone(): self.sampling.max_new_tokens,
                profile.stop_field.clone(): self.sampling.stop,
            },
            profile.return_logprob_field.clone(): true,
            profile.top_logprobs_num_field.clone(): self.return_top_logprobs,
            profile.return_routed_experts_field.clone(): self.return_routed_experts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One candidate from a step's top-logprob list.
#[derive(Debug, Clone, PartialEq)]
pub struct TopCandidate {
    pub token_id: u32,
    pub logprob: f64,
    /// Detokenized candidate text when the server provides it; needed to
    /// force this candidate into a child prefix.
    pub text: Option<String>,
}

/// Parsed, internally consistent generation result. All per-token arrays have
/// equal length; stop-marker tokens have already been stripped.
#[derive(Debug, Clone, PartialEq)]
pub struct GenResponse {
    pub token_ids: Vec<u32>,
    pub token_texts: Vec<String>,
    pub top_logprobs: Vec<Vec<TopCandidate>>,
    pub finish_reason: FinishReason,
    pub trace: Option<RoutingTrace>,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("transport failure after {attempts} attempts: {last}")]
    Transport { attempts: usize, last: reqwest::Error },
    #[error("endpoint returned HTTP {status}")]
    Http { status: u16 },
    #[error("malformed response: {0}")]
    Parse(String),
    #[error("routed-expert payload invalid: {0}")]
    Codec(#[from] CodecError),
}

fn parse_entry(v: &Value, what: &str) -> Result<(f64, u32, Option<String>), GenError> {
    let arr = v
        .as_array()
        .ok_or_else(|| GenError::Parse(format!("{what}: expected [logprob, id, text] array")))?;
    if arr.len() < 2 {
        return Err(GenError::Parse(format!("{what}: entry has {} fields", arr.len())));
    }
    let logprob = arr[0]
        .as_f64()
        .ok_or_else(|| GenError::Parse(format!("{what}: logprob not a number")))?;
    let id = arr[1]
        .as_u64()
        .ok_or_else(|| GenError::Parse(format!("{what}: token id not an unsigned integer")))?;
    let text = arr.get(2).and_then(|t| t.as_str()).map(str::to_string);
    Ok((logprob, id as u32, text))
}

/// Dimensions needed to decode the routed-expert payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceDims {
    pub n_layers: usize,
    pub slots: usize,
    pub n_experts: usize,
}

impl GenResponse {
    /// Parses a raw response body. Validates that the per-token parallel
    /// arrays agree, decodes the routed-expert trace when present, and strips
    /// trailing stop-marker tokens (the marker is template scaffolding, not
    /// generated code).
    pub fn parse(
        body: &Value,
        profile: &EndpointProfile,
        dims: TraceDims,
        stop: &[String],
    ) -> Result<GenResponse, GenError> {
        let finish = match lookup(body, &profile.resp_finish_reason_path).and_then(Value::as_str) {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) | None => FinishReason::Error,
        };

        let token_entries = lookup(body, &profile.resp_token_logprobs_path)
            .and_then(Value::as_array)
            .ok_or_else(|| {
                GenError::Parse(format!("missing {}", profile.resp_token_logprobs_path))
            })?;
        let mut token_ids = Vec::with_capacity(token_entries.len());
        let mut token_texts = Vec::with_capacity(token_entries.len());
        for entry in token_entries {
            let (_lp, id, text) = parse_entry(entry, "token logprobs")?;
            token_ids.push(id);
            token_texts.push(text.ok_or_else(|| {
                GenError::Parse("token logprobs entry missing token text".to_string())
            })?);
        }

        let top_entries = lookup(body, &profile.resp_top_logprobs_path)
            .and_then(Value::as_array)
            .ok_or_else(|| GenError::Parse(format!("missing {}", profile.resp_top_logprobs_path)))?;
        if top_entries.len() != token_ids.len() {
            return Err(GenError::Parse(format!(
                "{} top-logprob rows for {} tokens",
                top_entries.len(),
                token_ids.len()
            )));
        }
        let mut top_logprobs = Vec::with_capacity(top_entries.len());
        for row in top_entries {
            let row = row
                .as_array()
                .ok_or_else(|| GenError::Parse("top-logprob row is not an array".to_string()))?;
            let mut parsed = Vec::with_capacity(row.len());
            for entry in row {
                let (logprob, token_id, text) = parse_entry(entry, "top logprobs")?;
                parsed.push(TopCandidate { token_id, logprob, text });
            }
            top_logprobs.push(parsed);
        }

        let n_raw = token_ids.len();
        let trace = match lookup(body, &profile.resp_routed_experts_path).and_then(Value::as_str) {
            Some(b64) => Some(decode_routed_experts(
                b64,
                n_raw,
                dims.n_layers,
                dims.slots,
                dims.n_experts,
            )?),
            None => None,
        };

        let mut resp = GenResponse { token_ids, token_texts, top_logprobs, finish_reason: finish, trace };
        if finish == FinishReason::Stop {
            resp.strip_stop_tokens(stop);
        }
        Ok(resp)
    }

    /// Removes trailing tokens that belong to an emitted stop string; the
    /// routed-expert rows for those tokens are dropped with them.
    fn strip_stop_tokens(&mut self, stop: &[String]) {
        let full: String = self.token_texts.concat();
        let Some(matched) = stop.iter().filter(|s| !s.is_empty() && full.ends_with(s.as_str())).max_by_key(|s| s.len())
        else {
            return;
        };
        let target = full.len() - matched.len();
        let mut keep = self.token_texts.len();
        let mut len = full.len();
        while keep > 0 && len > target {
            keep -= 1;
            len -= self.token_texts[keep].len();
        }
        self.token_ids.truncate(keep);
        self.token_texts.truncate(keep);
        self.top_logprobs.truncate(keep);
        if let Some(trace) = &self.trace {
            let flat =
                trace.flat()[..keep * trace.n_layers() * trace.slots()].to_vec();
            self.trace = Some(
                RoutingTrace::from_flat(keep, trace.n_layers(), trace.slots(), flat)
                    .expect("truncation preserves shape"),
            );
        }
    }
}
