use std::time::Duration;

use crate::profile::EndpointProfile;
use crate::wire::{GenError, GenRequest, GenResponse, TraceDims};

/// Retry behavior for transport-level failures only. Generation is not
/// idempotent server-side, but duplicate children deduplicate through
/// content-hash node IDs, so a retried request is safe for the tree protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

/// Async client for a `/generate`-compatible endpoint.
///
/// Holds no mutable state beyond the connection pool, so one client can serve
/// any number of concurrent in-flight requests.
#[derive(Debug, Clone)]
pub struct GenClient {
    http: reqwest::Client,
    base_url: String,
    profile: EndpointProfile,
    dims: TraceDims,
    retry: RetryPolicy,
}

impl GenClient {
    pub fn new(base_url: &str, profile: EndpointProfile, dims: TraceDims) -> Self {
        GenClient {
            http: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            profile,
            dims,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Sends one generation request, retrying transport failures with
    /// exponential backoff. HTTP status errors and malformed bodies are not
    /// retried.
    pub async fn generate(&self, request: &GenRequest) -> Result<GenResponse, GenError> {
        let url = format!("{}{}", self.base_url, self.profile.generate_path);
        let body = request.to_body(&self.profile);
        let mut backoff = self.retry.initial_backoff;
        let attempts = self.retry.attempts.max(1);
        let mut last_err = None;
        for attempt in 0..attempts {
            match self.http.post(&url).json(&body).send().await {
                Ok(resp) => {
                    let status = resp.status();
                    if !status.is_success() {
                        return Err(GenError::Http { status: status.as_u16() });
                    }
                    let value: serde_json::Value =
                        resp.json().await.map_err(|e| GenError::Parse(e.to_string()))?;
                    return GenResponse::parse(
                        &value,
                        &self.profile,
                        self.dims,
                        &request.sampling.stop,
                    );
                }
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "generate transport failure");
                    last_err = Some(e);
                    if attempt + 1 < attempts {
                        tokio::time::sleep(backoff).await;
                        backoff *= 2;
                    }
                }
            }
        }
        Err(GenError::Transport { attempts, last: last_err.expect("at least one attempt ran") })
    }
}
