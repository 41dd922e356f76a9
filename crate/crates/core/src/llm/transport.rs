use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("HTTP status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Io(String),
}

impl TransportError {
    /// Server-side and rate-limit failures are worth retrying; client errors are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Timeout | TransportError::Io(_) => true,
        }
    }
}

/// Minimal JSON-over-HTTP POST used by the gateway and the remote embedder.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError>;
}

#[derive(Debug, Default, Clone)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let mut req = agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => resp.into_json::<Value>().map_err(|e| TransportError::Io(e.to_string())),
            Err(ureq::Error::Status(code, resp)) => Err(TransportError::Status {
                code,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Io(msg))
                }
            }
        }
    }
}

/// Refuses every request and counts attempts; proves a code path is offline.
#[derive(Debug, Default)]
pub struct OfflineTransport {
    attempts: AtomicUsize,
}

impl OfflineTransport {
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

impl Transport for OfflineTransport {
    fn post_json(&self, url: &str, _: Option<&str>, _: &Value, _: Duration) -> Result<Value, TransportError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Io(format!("network disabled (attempted POST {url})")))
    }
}
