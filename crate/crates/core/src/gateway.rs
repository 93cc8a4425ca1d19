//! Single access point for external services (LLM chat, TTS).
//!
//! Handles retries with seeded exponential backoff, per-service rate
//! limiting, and record/replay of responses keyed by a hash of the
//! canonical request.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    Llm,
    Tts,
}

impl Service {
    pub fn as_str(&self) -> &'static str {
        match self {
            Service::Llm => "llm",
            Service::Tts => "tts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRequest {
    pub service: Service,
    /// Canonical bytes; see [`crate::canon::to_compact`].
    pub payload: Vec<u8>,
    pub purpose: String,
}

impl ServiceRequest {
    /// Fixture key: SHA-256 over service, purpose tag and payload.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.service.as_str().as_bytes());
        h.update([0]);
        h.update(self.purpose.as_bytes());
        h.update([0]);
        h.update(&self.payload);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceResponse {
    pub payload: Vec<u8>,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        TransportError {
            message: message.into(),
            retryable: true,
        }
    }
    pub fn fatal(message: impl Into<String>) -> Self {
        TransportError {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Something that can answer a service request, usually over the network.
pub trait Transport: Send + Sync {
    fn send(&self, req: &ServiceRequest) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("service call {purpose:?} failed after {attempts} attempt(s): {message}")]
    Service {
        purpose: String,
        attempts: u32,
        message: String,
    },
    #[error("no recorded fixture for {purpose:?} (hash {hash})")]
    FixtureMiss { purpose: String, hash: String },
    #[error("service {0:?} is not configured")]
    NotConfigured(Service),
    #[error("fixture store: {0}")]
    Store(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base: Duration,
    pub factor: f64,
    /// Fraction of each delay added as uniform random jitter.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base: Duration::from_secs(1),
            factor: 2.0,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Delays slept before attempts 2..=max_attempts. Same seed, same schedule.
    pub fn backoff_schedule(&self, seed: u64) -> Vec<Duration> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.max_attempts.saturating_sub(1))
            .map(|i| {
                let nominal = self.base.as_secs_f64() * self.factor.powi(i as i32);
                let jitter = if self.jitter > 0.0 {
                    rng.random_range(0.0..=self.jitter) * nominal
                } else {
                    0.0
                };
                Duration::from_secs_f64(nominal + jitter)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMode {
    Record,
    Replay,
    Passthrough,
}

/// Recorded responses under `<root>/<purpose>/<hash>`.
pub struct FixtureStore {
    root: Option<PathBuf>,
    mode: FixtureMode,
    cache: RwLock<HashMap<String, Vec<u8>>>,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn passthrough() -> Self {
        FixtureStore {
            root: None,
            mode: FixtureMode::Passthrough,
            cache: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
        }
    }

    pub fn replay(root: impl Into<PathBuf>) -> Self {
        FixtureStore {
            root: Some(root.into()),
            mode: FixtureMode::Replay,
            cache: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
        }
    }

    pub fn record(root: impl Into<PathBuf>) -> Self {
        FixtureStore {
            root: Some(root.into()),
            mode: FixtureMode::Record,
            cache: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
        }
    }

    pub fn mode(&self) -> FixtureMode {
        self.mode
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn path_for(&self, req: &ServiceRequest, hash: &str) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join(purpose_dir(&req.purpose)).join(hash))
    }

    pub fn lookup(&self, req: &ServiceRequest) -> Result<Option<Vec<u8>>, std::io::Error> {
        let hash = req.hash();
        if let Some(hit) = self
            .cache
            .read()
            .expect("fixture cache poisoned")
            .get(&hash)
        {
            return Ok(Some(hit.clone()));
        }
        let Some(path) = self.path_for(req, &hash) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => {
                self.cache
                    .write()
                    .expect("fixture cache poisoned")
                    .insert(hash, bytes.clone());
                Ok(Some(bytes))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn store(&self, req: &ServiceRequest, payload: &[u8]) -> Result<(), std::io::Error> {
        let hash = req.hash();
        let _guard = self.write_lock.lock().expect("fixture write lock poisoned");
        if let Some(path) = self.path_for(req, &hash) {
            crate::store::write_atomic(&path, payload)?;
        }
        self.cache
            .write()
            .expect("fixture cache poisoned")
            .insert(hash, payload.to_vec());
        Ok(())
    }
}

fn purpose_dir(purpose: &str) -> String {
    purpose
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Token bucket admitting `per_minute` requests per minute with a burst of
/// the same size.
pub struct TokenBucket {
    per_minute: u32,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_minute: u32) -> Self {
        TokenBucket {
            per_minute,
            state: Mutex::new((per_minute as f64, Instant::now())),
        }
    }

    /// Takes one token, or returns how long to wait before retrying.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        if self.per_minute == 0 {
            return Ok(());
        }
        let rate = self.per_minute as f64 / 60.0;
        let mut st = self.state.lock().expect("rate limiter poisoned");
        let now = Instant::now();
        let refill = now.duration_since(st.1).as_secs_f64() * rate;
        st.0 = (st.0 + refill).min(self.per_minute as f64);
        st.1 = now;
        if st.0 >= 1.0 {
            st.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - st.0) / rate))
        }
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    transports: HashMap<Service, Arc<dyn Transport>>,
    limiters: HashMap<Service, TokenBucket>,
    store: FixtureStore,
    seed: u64,
    sleeper: Sleeper,
    transport_calls: AtomicU64,
    pub policy: RetryPolicy,
}

impl Gateway {
    pub fn new(store: FixtureStore, seed: u64) -> Self {
        Gateway {
            transports: HashMap::new(),
            limiters: HashMap::new(),
            store,
            seed,
            sleeper: Arc::new(std::thread::sleep),
            transport_calls: AtomicU64::new(0),
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_transport(mut self, service: Service, transport: Arc<dyn Transport>) -> Self {
        self.transports.insert(service, transport);
        self
    }

    pub fn with_rate_limit(mut self, service: Service, per_minute: u32) -> Self {
        self.limiters.insert(service, TokenBucket::new(per_minute));
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn fixture_mode(&self) -> FixtureMode {
        self.store.mode()
    }

    /// Number of times any transport was invoked.
    pub fn transport_calls(&self) -> u64 {
        self.transport_calls.load(Ordering::SeqCst)
    }

    pub fn call(&self, req: &ServiceRequest) -> Result<ServiceResponse, GatewayError> {
        self.call_with(req, &self.policy)
    }

    pub fn call_with(
        &self,
        req: &ServiceRequest,
        policy: &RetryPolicy,
    ) -> Result<ServiceResponse, GatewayError> {
        let started = Instant::now();
        if self.store.mode() == FixtureMode::Replay {
            return match self.store.lookup(req)? {
                Some(payload) => Ok(ServiceResponse {
                    payload,
                    latency_ms: 0,
                    attempt_count: 1,
                }),
                None => Err(GatewayError::FixtureMiss {
                    purpose: req.purpose.clone(),
                    hash: req.hash(),
                }),
            };
        }
        let transport = self
            .transports
            .get(&req.service)
            .ok_or(GatewayError::NotConfigured(req.service))?;
        let seed = self.seed ^ u64::from_str_radix(&req.hash()[..16], 16).unwrap_or(0);
        let delays = policy.backoff_schedule(seed);
        let max = policy.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            if attempt > 1 {
                (self.sleeper)(delays[(attempt - 2) as usize]);
            }
            self.admit(req.service);
            self.transport_calls.fetch_add(1, Ordering::SeqCst);
            match transport.send(req) {
                Ok(payload) => {
                    if self.store.mode() == FixtureMode::Record {
                        self.store.store(req, &payload)?;
                    }
                    return Ok(ServiceResponse {
                        payload,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                    });
                }
                Err(e) => {
                    log::warn!(
                        "{} attempt {attempt}/{max} failed: {}",
                        req.purpose,
                        e.message
                    );
                    last = e.message.clone();
                    if !e.retryable {
                        return Err(GatewayError::Service {
                            purpose: req.purpose.clone(),
                            attempts: attempt,
                            message: last,
                        });
                    }
                }
            }
        }
        Err(GatewayError::Service {
            purpose: req.purpose.clone(),
            attempts: max,
            message: last,
        })
    }

    fn admit(&self, service: Service) {
        if let Some(bucket) = self.limiters.get(&service) {
            while let Err(wait) = bucket.try_acquire() {
                (self.sleeper)(wait);
            }
        }
    }
}

/// Chat-completion client configured from `LECTERN_LLM_ENDPOINT`,
/// `LECTERN_LLM_MODEL` and `LECTERN_LLM_KEY`. The request payload's
/// `prompt` field becomes the single user message; the response payload is
/// the assistant message text.
pub struct HttpLlmTransport {
    endpoint: String,
    model: String,
    key: String,
    agent: ureq::Agent,
}

impl HttpLlmTransport {
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("LECTERN_LLM_ENDPOINT").ok()?;
        let model = std::env::var("LECTERN_LLM_MODEL").unwrap_or_else(|_| "default".into());
        let key = std::env::var("LECTERN_LLM_KEY").unwrap_or_default();
        Some(HttpLlmTransport {
            endpoint,
            model,
            key,
            agent: http_agent(),
        })
    }
}

fn http_agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(300)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn classify_status(status: u16, body: &str) -> TransportError {
    let msg = format!(
        "HTTP {status}: {}",
        body.chars().take(400).collect::<String>()
    );
    if status == 429 || status >= 500 {
        TransportError::retryable(msg)
    } else {
        TransportError::fatal(msg)
    }
}

impl Transport for HttpLlmTransport {
    fn send(&self, req: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        let payload: serde_json::Value = serde_json::from_slice(&req.payload)
            .map_err(|e| TransportError::fatal(format!("bad payload: {e}")))?;
        let prompt = payload
            .get("prompt")
            .and_then(|p| p.as_str())
            .unwrap_or_default();
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| TransportError::retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::retryable(e.to_string()))?;
        if status != 200 {
            return Err(classify_status(status, &text));
        }
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| TransportError::fatal(format!("bad response: {e}")))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| TransportError::fatal("response lacks choices[0].message.content"))?;
        Ok(strip_code_fence(content).as_bytes().to_vec())
    }
}

/// Models often wrap JSON answers in a markdown fence.
fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.split_once('\n').map_or("", |(_, r)| r);
        return rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    t
}

/// TTS client configured from `LECTERN_TTS_ENDPOINT` and `LECTERN_TTS_KEY`.
/// The canonical request payload is posted as-is and the JSON answer is
/// returned verbatim.
pub struct HttpTtsTransport {
    endpoint: String,
    key: String,
    agent: ureq::Agent,
}

impl HttpTtsTransport {
    pub fn from_env() -> Option<Self> {
        Some(HttpTtsTransport {
            endpoint: std::env::var("LECTERN_TTS_ENDPOINT").ok()?,
            key: std::env::var("LECTERN_TTS_KEY").unwrap_or_default(),
            agent: http_agent(),
        })
    }
}

impl Transport for HttpTtsTransport {
    fn send(&self, req: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .header("Content-Type", "application/json")
            .send(&req.payload[..])
            .map_err(|e| TransportError::retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError::retryable(e.to_string()))?;
        if status != 200 {
            return Err(classify_status(status, &String::from_utf8_lossy(&bytes)));
        }
        Ok(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl Transport for Flaky {
        fn send(&self, _req: &ServiceRequest) -> Result<Vec<u8>, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(TransportError::retryable("connection reset"))
            } else {
                Ok(b"{\"ok\":true}".to_vec())
            }
        }
    }

    fn req() -> ServiceRequest {
        ServiceRequest {
            service: Service::Llm,
            payload: b"{\"prompt\":\"hi\"}".to_vec(),
            purpose: "test.echo".into(),
        }
    }

    fn quiet(store: FixtureStore) -> (Gateway, Arc<Mutex<Vec<Duration>>>) {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let s2 = slept.clone();
        let gw =
            Gateway::new(store, 42).with_sleeper(Arc::new(move |d| s2.lock().unwrap().push(d)));
        (gw, slept)
    }

    #[test]
    fn retries_until_success() {
        let (gw, slept) = quiet(FixtureStore::passthrough());
        let gw = gw.with_transport(
            Service::Llm,
            Arc::new(Flaky {
                failures: 2,
                calls: AtomicU32::new(0),
            }),
        );
        let resp = gw.call(&req()).unwrap();
        assert_eq!(resp.attempt_count, 3);
        assert_eq!(gw.transport_calls(), 3);
        let slept = slept.lock().unwrap();
        assert_eq!(slept.len(), 2);
        assert!(slept[0] >= Duration::from_secs(1) && slept[0] <= Duration::from_millis(1250));
        assert!(slept[1] >= Duration::from_secs(2) && slept[1] <= Duration::from_millis(2500));
    }

    #[test]
    fn exhausted_retries_name_the_purpose() {
        let (gw, _) = quiet(FixtureStore::passthrough());
        let gw = gw.with_transport(
            Service::Llm,
            Arc::new(Flaky {
                failures: 10,
                calls: AtomicU32::new(0),
            }),
        );
        match gw.call(&req()) {
            Err(GatewayError::Service {
                purpose, attempts, ..
            }) => {
                assert_eq!(purpose, "test.echo");
                assert_eq!(attempts, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backoff_is_reproducible_per_seed() {
        let p = RetryPolicy {
            max_attempts: 5,
            ..RetryPolicy::default()
        };
        assert_eq!(p.backoff_schedule(9), p.backoff_schedule(9));
        assert_ne!(p.backoff_schedule(9), p.backoff_schedule(10));
        let no_jitter = RetryPolicy { jitter: 0.0, ..p };
        let secs: Vec<f64> = no_jitter
            .backoff_schedule(1)
            .iter()
            .map(|d| d.as_secs_f64())
            .collect();
        assert_eq!(secs, vec![1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (rec, _) = quiet(FixtureStore::record(dir.path()));
        let rec = rec.with_transport(
            Service::Llm,
            Arc::new(Flaky {
                failures: 0,
                calls: AtomicU32::new(0),
            }),
        );
        let recorded = rec.call(&req()).unwrap();

        let (rep, _) = quiet(FixtureStore::replay(dir.path()));
        let replayed = rep.call(&req()).unwrap();
        assert_eq!(recorded.payload, replayed.payload);
        assert_eq!(replayed.attempt_count, 1);
        assert_eq!(rep.transport_calls(), 0);
        assert!(dir.path().join("test.echo").join(req().hash()).exists());
    }

    #[test]
    fn replay_miss_is_an_error_not_a_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let (gw, _) = quiet(FixtureStore::replay(dir.path()));
        let gw = gw.with_transport(
            Service::Llm,
            Arc::new(Flaky {
                failures: 0,
                calls: AtomicU32::new(0),
            }),
        );
        assert!(matches!(
            gw.call(&req()),
            Err(GatewayError::FixtureMiss { .. })
        ));
        assert_eq!(gw.transport_calls(), 0);
    }

    #[test]
    fn hash_depends_on_purpose_and_payload() {
        let a = req();
        let mut b = req();
        b.purpose = "other".into();
        let mut c = req();
        c.payload.push(b' ');
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash(), req().hash());
    }

    #[test]
    fn token_bucket_limits_bursts() {
        let bucket = TokenBucket::new(2);
        assert!(bucket.try_acquire().is_ok());
        assert!(bucket.try_acquire().is_ok());
        let wait = bucket.try_acquire().unwrap_err();
        assert!(wait > Duration::from_secs(20));
    }

    #[test]
    fn code_fences_are_stripped() {
        assert_eq!(strip_code_fence("```json\n{\"a\":1}\n```"), "{\"a\":1}");
        assert_eq!(strip_code_fence(" {} "), "{}");
    }
}
