//! Remote model access shared by the embedding and chat layers.
//!
//! A [`ProviderClient`] wraps an HTTP [`Transport`] with bearer auth, bounded
//! retries with jittered exponential backoff, an in-flight request limit and a
//! content-addressed on-disk cache. In offline mode no request ever reaches the
//! transport; cache misses become [`ProviderError::OfflineMiss`].

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("offline mode: no cached response for request {hash}")]
    OfflineMiss { hash: String },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cache i/o on {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid provider config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based), with jitter in [0.5, 1).
    pub fn delay(&self, attempt: usize) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << (attempt.saturating_sub(1)).min(16));
        let jitter: f64 = rand::thread_rng().gen_range(0.5..1.0);
        Duration::from_millis((exp as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
    pub offline: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model_id: String::new(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
            cache_dir: None,
            offline: false,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.retry.max_attempts < 1 {
            return Err(ProviderError::Config("retry.max_attempts must be >= 1".into()));
        }
        if self.max_in_flight < 1 {
            return Err(ProviderError::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("connection: {0}")]
    Connect(String),
    #[error("{0}")]
    Other(String),
}

/// Sends one JSON POST. Implementations must be shareable across threads.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value)
        -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<HttpReply, TransportError> {
        let bytes = serde_json::to_vec(body).map_err(|e| TransportError::Other(e.to_string()))?;
        let mut req = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(bytes);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout(e.to_string())
            } else if e.is_connect() {
                TransportError::Connect(e.to_string())
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content-addressed JSON files under `{root}/{hash[..2]}/{hash}.json`.
/// Writes go through a temporary file and a rename, one at a time.
#[derive(Debug)]
pub struct ContentStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl ContentStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ContentStore {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.root.join(&hash[..2.min(hash.len())]).join(format!("{hash}.json"))
    }

    pub fn read(&self, hash: &str) -> Option<Value> {
        let text = std::fs::read_to_string(self.path_for(hash)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, hash: &str, value: &Value) -> Result<(), ProviderError> {
        let path = self.path_for(hash);
        let io = |source| ProviderError::Cache {
            path: path.display().to_string(),
            source,
        };
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = path.parent().expect("hash path has a parent");
        std::fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!(".{hash}.tmp"));
        let bytes = serde_json::to_vec_pretty(value).expect("json values serialize");
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }
}

/// Caps the number of concurrently outstanding requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    limit: usize,
    current: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub struct InFlightGuard<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(limit: usize) -> Self {
        InFlightLimiter {
            limit: limit.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        InFlightGuard { limiter: self }
    }

    /// Highest concurrency observed so far.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self
            .limiter
            .current
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

pub struct ProviderClient {
    config: ProviderConfig,
    transport: Arc<dyn Transport>,
    cache: Option<ContentStore>,
    limiter: InFlightLimiter,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl std::fmt::Debug for ProviderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderClient")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl ProviderClient {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let transport = ReqwestTransport::new(Duration::from_secs(config.timeout_secs))?;
        Self::with_transport(config, Arc::new(transport))
    }

    pub fn with_transport(
        config: ProviderConfig,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, ProviderError> {
        config.validate()?;
        let cache = config.cache_dir.as_ref().map(ContentStore::new);
        Ok(ProviderClient {
            limiter: InFlightLimiter::new(config.max_in_flight),
            config,
            transport,
            cache,
            network_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.limiter.peak()
    }

    pub fn url(&self, endpoint: &str) -> String {
        format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            endpoint.trim_start_matches('/')
        )
    }

    /// Hash identifying a request in the response cache.
    pub fn request_hash(endpoint: &str, body: &Value) -> String {
        let canonical = json!({ "endpoint": endpoint, "body": body });
        sha256_hex(canonical.to_string().as_bytes())
    }

    /// Cached request: a hit requires the stored request to equal this one.
    pub fn call(&self, endpoint: &str, body: &Value) -> Result<Value, ProviderError> {
        let hash = Self::request_hash(endpoint, body);
        let request = json!({ "endpoint": endpoint, "body": body });
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.read(&hash) {
                if entry.get("request") == Some(&request) {
                    if let Some(resp) = entry.get("response") {
                        self.cache_hits.fetch_add(1, Ordering::SeqCst);
                        return Ok(resp.clone());
                    }
                } else {
                    log::warn!("cache entry {hash} holds a different request; ignoring it");
                }
            }
        }
        if self.config.offline {
            return Err(ProviderError::OfflineMiss { hash });
        }
        let response = self.send(endpoint, body)?;
        if let Some(cache) = &self.cache {
            cache.write(&hash, &json!({ "request": request, "response": response }))?;
        }
        Ok(response)
    }

    /// Uncached request with retries. Refused in offline mode.
    pub fn send(&self, endpoint: &str, body: &Value) -> Result<Value, ProviderError> {
        if self.config.offline {
            return Err(ProviderError::OfflineMiss {
                hash: Self::request_hash(endpoint, body),
            });
        }
        let url = self.url(endpoint);
        let key = std::env::var(&self.config.api_key_env).ok();
        let attempts = self.config.retry.max_attempts;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let outcome = {
                let _slot = self.limiter.acquire();
                self.network_calls.fetch_add(1, Ordering::SeqCst);
                self.transport.post_json(&url, key.as_deref(), body)
            };
            match outcome {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return serde_json::from_str(&reply.body)
                        .map_err(|e| ProviderError::InvalidResponse(e.to_string()));
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(ProviderError::Auth {
                        status: reply.status,
                    });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    last = format!("HTTP {}", reply.status);
                }
                Ok(reply) => {
                    return Err(ProviderError::Http {
                        status: reply.status,
                        body: reply.body,
                    });
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < attempts {
                let delay = self.config.retry.delay(attempt);
                log::debug!("{url}: {last}; retry {attempt}/{attempts} in {delay:?}");
                std::thread::sleep(delay);
            }
        }
        Err(ProviderError::Exhausted { attempts, last })
    }
}
