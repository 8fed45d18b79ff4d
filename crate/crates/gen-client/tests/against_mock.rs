use std::net::SocketAddr;
use std::sync::Arc;

use gen_client::{
    build_prefix, EndpointProfile, FinishReason, GenClient, GenRequest, SamplingParams, TraceDims,
};
use mock_moe::{c_demo_config, crossing_lambda, router};

async fn spawn(cfg: mock_moe::MockConfig) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(Arc::new(cfg))).await.unwrap();
    });
    addr
}

fn sampling(max_new_tokens: usize) -> SamplingParams {
    SamplingParams {
        temperature: 0.7,
        top_p: 0.95,
        top_k: 20,
        max_new_tokens,
        stop: vec!["</function>".to_string()],
    }
}

#[tokio::test]
async fn single_token_request_has_single_rows_everywhere() {
    let addr = spawn(c_demo_config(3, crossing_lambda(40))).await;
    let client = GenClient::new(
        &format!("http://{addr}"),
        EndpointProfile::default(),
        TraceDims { n_layers: 40, slots: 8, n_experts: 256 },
    );
    let req = GenRequest {
        prefix_text: build_prefix("sys", "user", true, ""),
        sampling: sampling(1),
        return_top_logprobs: 30,
        return_routed_experts: true,
    };
    let resp = client.generate(&req).await.unwrap();
    assert_eq!(resp.finish_reason, FinishReason::Length);
    assert_eq!(resp.token_ids.len(), 1);
    assert_eq!(resp.top_logprobs.len(), 1);
    let trace = resp.trace.as_ref().unwrap();
    assert_eq!((trace.n_tokens(), trace.n_layers(), trace.slots()), (1, 40, 8));
}

#[tokio::test]
async fn stop_string_completion_is_marked_and_stripped() {
    let addr = spawn(c_demo_config(3, crossing_lambda(40))).await;
    let client = GenClient::new(
        &format!("http://{addr}"),
        EndpointProfile::default(),
        TraceDims { n_layers: 40, slots: 8, n_experts: 256 },
    );
    let req = GenRequest {
        prefix_text: build_prefix("sys", "user", true, ""),
        sampling: sampling(512),
        return_top_logprobs: 30,
        return_routed_experts: true,
    };
    let resp = client.generate(&req).await.unwrap();
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    assert!(!resp.token_texts.concat().contains("</function>"));
    assert_eq!(resp.token_ids.len(), resp.trace.as_ref().unwrap().n_tokens());
    assert_eq!(resp.token_ids.len(), resp.top_logprobs.len());
}

#[tokio::test]
async fn many_concurrent_requests_complete() {
    let addr = spawn(c_demo_config(9, crossing_lambda(40))).await;
    let client = GenClient::new(
        &format!("http://{addr}"),
        EndpointProfile::default(),
        TraceDims { n_layers: 40, slots: 8, n_experts: 256 },
    );
    let mut joins = Vec::new();
    for i in 0..32 {
        let client = client.clone();
        joins.push(tokio::spawn(async move {
            let req = GenRequest {
                prefix_text: build_prefix("sys", &format!("user {i}"), true, ""),
                sampling: sampling(256),
                return_top_logprobs: 30,
                return_routed_experts: true,
            };
            client.generate(&req).await.unwrap()
        }));
    }
    for j in joins {
        let resp = j.await.unwrap();
        assert_eq!(resp.finish_reason, FinishReason::Stop);
    }
}
