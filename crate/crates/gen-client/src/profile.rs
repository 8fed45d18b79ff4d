use serde::{Deserialize, Serialize};

fn d(s: &str) -> String {
    s.to_string()
}

/// Wire-level field names for a `/generate`-compatible server.
///
/// Response entries are dot-separated paths into the response JSON. The
/// defaults match an SGLang-style schema; point a profile file at different
/// names when a server drifts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointProfile {
    pub generate_path: String,
    pub text_field: String,
    pub sampling_field: String,
    pub temperature_field: String,
    pub top_p_field: String,
    pub top_k_field: String,
    pub max_new_tokens_field: String,
    pub stop_field: String,
    pub return_logprob_field: String,
    pub top_logprobs_num_field: String,
    pub return_routed_experts_field: String,
    pub resp_token_logprobs_path: String,
    pub resp_top_logprobs_path: String,
    pub resp_routed_experts_path: String,
    pub resp_finish_reason_path: String,
}

impl Default for EndpointProfile {
    fn default() -> Self {
        EndpointProfile {
            generate_path: d("/generate"),
            text_field: d("text"),
            sampling_field: d("sampling_params"),
            temperature_field: d("temperature"),
            top_p_field: d("top_p"),
            top_k_field: d("top_k"),
            max_new_tokens_field: d("max_new_tokens"),
            stop_field: d("stop"),
            return_logprob_field: d("return_logprob"),
            top_logprobs_num_field: d("top_logprobs_num"),
            return_routed_experts_field: d("return_routed_experts"),
            resp_token_logprobs_path: d("meta_info.output_token_logprobs"),
            resp_top_logprobs_path: d("meta_info.output_top_logprobs"),
            resp_routed_experts_path: d("meta_info.routed_experts"),
            resp_finish_reason_path: d("meta_info.finish_reason.type"),
        }
    }
}

impl EndpointProfile {
    pub fn load(path: &std::path::Path) -> Result<Self, std::io::Error> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Follows a dot-separated path through nested JSON objects.
pub(crate) fn lookup<'a>(value: &'a serde_json::Value, path: &str) -> Option<&'a serde_json::Value> {
    let mut cur = value;
    for key in path.split('.') {
        cur = cur.get(key)?;
    }
    Some(cur)
}
