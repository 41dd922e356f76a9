//! Prompt rendering and a chat-completion client with record/replay caching.
//!
//! Every downstream stage can run offline: in [`Mode::Replay`] the gateway
//! answers exclusively from its newline-JSON cache and never touches the
//! transport.

mod cache;
mod prompt;
mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use cache::JsonlCache;
pub use prompt::{render_p1, render_p2, PromptRequest, TemplateId, DEFAULT_MAX_TOKENS, DEFAULT_P2_MAX_LINES};
pub use transport::{HttpTransport, OfflineTransport, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Call the endpoint; do not cache.
    Live,
    /// Serve cache hits, call the endpoint on a miss and store the answer.
    Record,
    /// Serve from cache only.
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode {other:?} (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("empty field: {0}")]
    EmptyField(&'static str),
    #[error("no cached response for request {key} in replay mode")]
    CacheMiss { key: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, attempts: u32, body: String },
    #[error("timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("cache I/O: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub p2_max_lines: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            api_key: None,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 500,
            max_in_flight: 4,
            p2_max_lines: DEFAULT_P2_MAX_LINES,
        }
    }
}

impl GatewayConfig {
    /// Applies `LLM_BASE_URL` and `LLM_API_KEY` from the environment.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            if !url.trim().is_empty() {
                self.base_url = url;
            }
        }
        self.api_key = std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty());
        self
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub(crate) struct Limiter {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut slots = self.slots.lock().expect("limiter lock");
            while *slots == 0 {
                slots = self.freed.wait(slots).expect("limiter lock");
            }
            *slots -= 1;
        }
        let out = f();
        *self.slots.lock().expect("limiter lock") += 1;
        self.freed.notify_one();
        out
    }
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct Gateway {
    config: GatewayConfig,
    mode: Mode,
    transport: Arc<dyn Transport>,
    cache: JsonlCache,
    limiter: Limiter,
    requests: AtomicU64,
    fixed_timestamp: Option<u64>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("model", &self.config.model)
            .field("cache", &self.cache.path())
            .finish()
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig, mode: Mode, transport: Arc<dyn Transport>, cache: JsonlCache) -> Self {
        let limiter = Limiter::new(config.max_in_flight);
        Self {
            config,
            mode,
            transport,
            cache,
            limiter,
            requests: AtomicU64::new(0),
            fixed_timestamp: None,
        }
    }

    /// Stamps every new cache entry with `ts` instead of the wall clock, so
    /// cache files written by fixture generators are reproducible.
    pub fn with_fixed_timestamp(mut self, ts: u64) -> Self {
        self.fixed_timestamp = Some(ts);
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cache(&self) -> &JsonlCache {
        &self.cache
    }

    /// Number of requests sent to the transport so far.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Fills in the configured model and sampling settings.
    pub fn prepare(&self, req: PromptRequest) -> PromptRequest {
        let mut req = req.with_model(self.config.model.clone()).with_temperature(self.config.temperature);
        req.max_tokens = self.config.max_tokens;
        req
    }

    pub fn p1(&self, sentence: &str, target: &str) -> Result<String, LlmError> {
        let req = self.prepare(render_p1(sentence, target)?);
        self.complete(&req)
    }

    pub fn p2(&self, predicates: &[String]) -> Result<String, LlmError> {
        let req = self.prepare(render_p2(predicates, self.config.p2_max_lines)?);
        self.complete(&req)
    }

    pub fn complete(&self, req: &PromptRequest) -> Result<String, LlmError> {
        let key = req.cache_key();
        match self.mode {
            Mode::Replay => self.cached(&key).ok_or(LlmError::CacheMiss { key }),
            Mode::Record => {
                if let Some(hit) = self.cached(&key) {
                    return Ok(hit);
                }
                let text = self.call(req)?;
                let entry = json!({
                    "key": key,
                    "template": req.template,
                    "model": req.model,
                    "temperature": req.temperature,
                    "prompt": req.prompt,
                    "response": text,
                    "created_at": self.fixed_timestamp.unwrap_or_else(unix_now),
                });
                self.cache.insert(entry).map_err(|e| LlmError::Cache(e.to_string()))?;
                Ok(text)
            }
            Mode::Live => self.call(req),
        }
    }

    fn cached(&self, key: &str) -> Option<String> {
        self.cache
            .get(key)
            .and_then(|v| v.get("response").and_then(Value::as_str).map(str::to_string))
    }

    fn call(&self, req: &PromptRequest) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let attempts = self.config.max_attempts.max(1);
        let mut last = TransportError::Io("no attempt made".into());
        let mut made = 0;
        for attempt in 1..=attempts {
            made = attempt;
            self.requests.fetch_add(1, Ordering::SeqCst);
            let result = self
                .limiter
                .run(|| self.transport.post_json(&url, self.config.api_key.as_deref(), &body, timeout));
            match result {
                Ok(v) => return extract_content(&v),
                Err(e) => {
                    let retry = e.is_retryable() && attempt < attempts;
                    last = e;
                    if !retry {
                        break;
                    }
                    let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        }
        Err(match last {
            TransportError::Status { code, body } => LlmError::Http {
                status: code,
                attempts: made,
                body,
            },
            TransportError::Timeout => LlmError::Timeout { attempts: made },
            TransportError::Io(message) => LlmError::Transport { attempts: made, message },
        })
    }
}

fn extract_content(v: &Value) -> Result<String, LlmError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse(truncate(&v.to_string(), 200)))
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    /// Answers with a canned completion; optionally fails the first N calls.
    struct Scripted {
        calls: AtomicUsize,
        fail_first: usize,
        status: u16,
    }

    impl Scripted {
        fn ok() -> Self {
            Self { calls: AtomicUsize::new(0), fail_first: 0, status: 500 }
        }
    }

    impl Transport for Scripted {
        fn post_json(&self, url: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<Value, TransportError> {
            assert!(url.ends_with("/chat/completions"));
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(TransportError::Status { code: self.status, body: "boom".into() });
            }
            let prompt = body["messages"][0]["content"].as_str().unwrap();
            assert_eq!(body["temperature"], 0.0);
            Ok(json!({"choices": [{"message": {"role": "assistant", "content": format!("echo:{}", prompt.len())}}]}))
        }
    }

    fn quick() -> GatewayConfig {
        GatewayConfig { backoff_ms: 1, ..GatewayConfig::default() }
    }

    #[test]
    fn record_then_replay_is_identical_and_offline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("llm.jsonl");
        let rec = Gateway::new(quick(), Mode::Record, Arc::new(Scripted::ok()), JsonlCache::open(&path).unwrap());
        let a = rec.p1("Masks save lives", "mask mandates").unwrap();

        let offline = Arc::new(OfflineTransport::default());
        let rep = Gateway::new(quick(), Mode::Replay, offline.clone(), JsonlCache::open(&path).unwrap());
        assert_eq!(rep.p1("Masks save lives", "mask mandates").unwrap(), a);
        assert_eq!(offline.attempts(), 0);
        assert_eq!(rep.request_count(), 0);
    }

    #[test]
    fn replay_miss_is_an_error() {
        let offline = Arc::new(OfflineTransport::default());
        let rep = Gateway::new(quick(), Mode::Replay, offline.clone(), JsonlCache::in_memory());
        assert!(matches!(rep.p1("a", "b"), Err(LlmError::CacheMiss { .. })));
        assert_eq!(offline.attempts(), 0);
    }

    #[test]
    fn live_mode_does_not_cache() {
        let g = Gateway::new(quick(), Mode::Live, Arc::new(Scripted::ok()), JsonlCache::in_memory());
        g.p1("a", "b").unwrap();
        assert!(g.cache().is_empty());
        assert_eq!(g.request_count(), 1);
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let t = Arc::new(Scripted { calls: AtomicUsize::new(0), fail_first: 2, status: 503 });
        let g = Gateway::new(quick(), Mode::Live, t.clone(), JsonlCache::in_memory());
        assert!(g.p1("a", "b").is_ok());
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let t = Arc::new(Scripted { calls: AtomicUsize::new(0), fail_first: 10, status: 500 });
        let g = Gateway::new(quick(), Mode::Record, t.clone(), JsonlCache::in_memory());
        match g.p1("a", "b") {
            Err(LlmError::Http { status, attempts, .. }) => assert_eq!((status, attempts), (500, 3)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
        assert!(g.cache().is_empty());
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Arc::new(Scripted { calls: AtomicUsize::new(0), fail_first: 10, status: 401 });
        let g = Gateway::new(quick(), Mode::Live, t.clone(), JsonlCache::in_memory());
        assert!(matches!(g.p1("a", "b"), Err(LlmError::Http { status: 401, attempts: 1, .. })));
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_body_is_reported() {
        assert!(matches!(extract_content(&json!({"choices": []})), Err(LlmError::BadResponse(_))));
    }

    #[test]
    fn limiter_bounds_concurrency() {
        let lim = Limiter::new(2);
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    lim.run(|| {
                        let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        std::thread::sleep(Duration::from_millis(5));
                        active.fetch_sub(1, Ordering::SeqCst);
                    })
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
