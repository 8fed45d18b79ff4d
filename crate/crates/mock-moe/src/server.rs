use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use crate::config::MockConfig;
use crate::generator::{generate, GenOutcome, MockSampling};

pub fn router(cfg: Arc<MockConfig>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/generate", post(handle_generate))
        .with_state(cfg)
}

/// Binds and serves until the process is stopped. Returns the bound address
/// through the callback before blocking.
pub async fn serve(
    cfg: Arc<MockConfig>,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(cfg)).await
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

fn bad_request(msg: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({"error": msg}))).into_response()
}

async fn handle_generate(State(cfg): State<Arc<MockConfig>>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return bad_request(format!("body is not valid JSON: {e}")),
    };
    let Some(text) = value.get("text").and_then(Value::as_str) else {
        return bad_request("missing string field `text`".to_string());
    };
    let sp = value.get("sampling_params").cloned().unwrap_or_else(|| json!({}));
    let defaults = MockSampling::default();
    let sampling = MockSampling {
        temperature: sp.get("temperature").and_then(Value::as_f64).unwrap_or(defaults.temperature),
        top_p: sp.get("top_p").and_then(Value::as_f64).unwrap_or(defaults.top_p),
        top_k: sp.get("top_k").and_then(Value::as_u64).unwrap_or(defaults.top_k as u64) as usize,
        max_new_tokens: sp
            .get("max_new_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(defaults.max_new_tokens as u64) as usize,
        stop: sp
            .get("stop")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default(),
    };
    if sampling.temperature <= 0.0 {
        return bad_request(format!("temperature must be positive, got {}", sampling.temperature));
    }
    let top_n = value.get("top_logprobs_num").and_then(Value::as_u64).unwrap_or(30) as usize;
    let want_experts =
        value.get("return_routed_experts").and_then(Value::as_bool).unwrap_or(false);

    let gen = match generate(&cfg, text, &sampling) {
        Ok(g) => g,
        Err(e) => return bad_request(e.to_string()),
    };

    let token_logprobs: Vec<Value> = gen
        .token_ids
        .iter()
        .zip(&gen.token_texts)
        .zip(&gen.token_logprobs)
        .map(|((id, text), lp)| json!([lp, id, text]))
        .collect();
    let top_logprobs: Vec<Value> = gen
        .top_probs
        .iter()
        .map(|row| {
            let entries: Vec<Value> = row
                .iter()
                .take(top_n.min(cfg.max_top_report))
                .map(|(id, p)| json!([p.ln(), id, cfg.vocab[*id as usize]]))
                .collect();
            Value::Array(entries)
        })
        .collect();

    let mut meta = json!({
        "finish_reason": {
            "type": match gen.outcome { GenOutcome::Stop => "stop", GenOutcome::Length => "length" }
        },
        "output_token_logprobs": token_logprobs,
        "output_top_logprobs": top_logprobs,
        "scripted": cfg.has_scripted_states(),
    });
    if want_experts {
        let mut bytes = Vec::with_capacity(gen.routing.len() * cfg.n_layers * cfg.slots * 4);
        for layers in &gen.routing {
            for row in layers {
                for &id in row {
                    bytes.extend_from_slice(&(id as i32).to_le_bytes());
                }
            }
        }
        meta["routed_experts"] = json!(BASE64.encode(&bytes));
    }
    let body = json!({
        "text": gen.token_texts.concat(),
        "meta_info": meta,
    });
    (StatusCode::OK, Json(body)).into_response()
}
