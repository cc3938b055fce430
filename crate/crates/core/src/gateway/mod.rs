//! Chat-completion access with caching, record/replay fixtures and JSON
//! validation.
//!
//! Every LLM call in the pipeline goes through a [`Gateway`]. In `Live` mode
//! requests reach a [`Transport`]; in `Record` mode every upstream exchange is
//! additionally appended to a JSONL fixture file; in `Replay` mode the fixture
//! file is the only source of responses and no transport is ever consulted.
//!
//! Requests are identified by [`CacheKey`], a SHA-256 over a canonical
//! serialization of `(model, temperature, messages, max_output_tokens)`.

mod fixture;
mod http;
pub mod json;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixture::{load_fixtures, FixtureRecord, FixtureResponse};
pub use http::{HttpTransport, DEFAULT_API_KEY_VAR, DEFAULT_BASE_URL};
pub use json::{JsonSchema, ParsedValue};

/// Model used throughout the pipeline unless configured otherwise.
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";

/// Instruction appended to the conversation when a reply is not usable JSON.
pub const JSON_REPAIR_INSTRUCTION: &str = "Output only the JSON object and nothing else.";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("upstream rejected request: {0}")]
    Upstream(String),
    #[error("no fixture recorded for request key {key}")]
    FixtureMiss { key: String },
    #[error("fixture {path}:{line}: {message}")]
    Fixture {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("model output violates schema after {} attempt(s): {reason}", raw_outputs.len())]
    SchemaViolation {
        reason: String,
        raw_outputs: Vec<String>,
    },
    #[error("gateway misconfigured: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
}

impl Default for CompletionRequest {
    fn default() -> Self {
        Self {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            messages: Vec::new(),
            max_output_tokens: None,
        }
    }
}

impl CompletionRequest {
    /// A default-configured request carrying a single user prompt.
    pub fn user(prompt: impl Into<String>) -> Self {
        Self::default().with_message(ChatMessage::user(prompt))
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_message(mut self, message: ChatMessage) -> Self {
        self.messages.push(message);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model identifier is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == Some(0) {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("message {i} has empty content")));
        }
        match self.messages.iter().find(|m| m.role != Role::System) {
            Some(first) if first.role == Role::User => Ok(()),
            Some(_) => Err(GatewayError::InvalidRequest(
                "first non-system message must come from the user".into(),
            )),
            None => Err(GatewayError::InvalidRequest("request has only system messages".into())),
        }
    }

    pub fn cache_key(&self) -> CacheKey {
        #[derive(Serialize)]
        struct Canonical<'a> {
            model: &'a str,
            temperature: f64,
            messages: &'a [ChatMessage],
            max_output_tokens: Option<u32>,
        }
        // -0.0 and 0.0 serialize differently but mean the same thing.
        let temperature = if self.temperature == 0.0 { 0.0 } else { self.temperature };
        let canonical = Canonical {
            model: &self.model,
            temperature,
            messages: &self.messages,
            max_output_tokens: self.max_output_tokens,
        };
        let bytes = serde_json::to_vec(&canonical).expect("request serialization cannot fail");
        CacheKey(hex::encode(Sha256::digest(&bytes)))
    }
}

/// Model parameters applied to every request a pipeline stage builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_output_tokens: None,
        }
    }
}

impl ModelSettings {
    pub fn request(&self, messages: Vec<ChatMessage>) -> CompletionRequest {
        CompletionRequest {
            model: self.model.clone(),
            temperature: self.temperature,
            messages,
            max_output_tokens: self.max_output_tokens,
        }
    }

    pub fn prompt(&self, user_prompt: impl Into<String>) -> CompletionRequest {
        self.request(vec![ChatMessage::user(user_prompt)])
    }
}

/// Hex-encoded SHA-256 of a request's canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    pub text: String,
    pub token_usage: BTreeMap<String, u64>,
    pub cache_hit: bool,
}

/// Raw completion produced by a transport.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    pub token_usage: BTreeMap<String, u64>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            token_usage: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    /// Retryable: connection failures, timeouts, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("auth: {0}")]
    Auth(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

/// Anything that can answer a chat-completion request.
pub trait Transport: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<Completion, TransportError>;
}

/// Transport backed by a closure; used for scripted models in tests and tools.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&CompletionRequest) -> Result<Completion, TransportError> + Send + Sync,
{
    fn send(&self, request: &CompletionRequest) -> Result<Completion, TransportError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewayMode {
    Live,
    Record(PathBuf),
    Replay(PathBuf),
}

impl GatewayMode {
    pub fn fixture_path(&self) -> Option<&Path> {
        match self {
            GatewayMode::Live => None,
            GatewayMode::Record(p) | GatewayMode::Replay(p) => Some(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_second: Option<f64>) -> Self {
        let interval = requests_per_second
            .filter(|r| r.is_finite() && *r > 0.0)
            .map(|r| Duration::from_secs_f64(1.0 / r));
        Self {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct GatewayBuilder {
    mode: GatewayMode,
    transport: Option<Arc<dyn Transport>>,
    retry: RetryPolicy,
    requests_per_second: Option<f64>,
}

impl GatewayBuilder {
    pub fn transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn requests_per_second(mut self, rps: f64) -> Self {
        self.requests_per_second = Some(rps);
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        let mut cache = HashMap::new();
        let mut recorder = None;
        match &self.mode {
            GatewayMode::Live => {
                if self.transport.is_none() {
                    return Err(GatewayError::Config("live mode requires a transport".into()));
                }
            }
            GatewayMode::Record(path) => {
                if self.transport.is_none() {
                    return Err(GatewayError::Config("record mode requires a transport".into()));
                }
                if path.exists() {
                    cache.extend(load_fixtures(path)?);
                }
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent)?;
                }
                recorder = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            GatewayMode::Replay(path) => {
                cache.extend(load_fixtures(path)?);
            }
        }
        // Replay never holds a transport, so it cannot reach the network.
        let transport = match self.mode {
            GatewayMode::Replay(_) => None,
            _ => self.transport,
        };
        Ok(Gateway {
            mode: self.mode,
            transport,
            cache: Mutex::new(cache),
            recorder: Mutex::new(recorder),
            limiter: RateLimiter::new(self.requests_per_second),
            retry: self.retry,
            upstream_calls: AtomicU64::new(0),
        })
    }
}

pub struct Gateway {
    mode: GatewayMode,
    transport: Option<Arc<dyn Transport>>,
    cache: Mutex<HashMap<CacheKey, Completion>>,
    recorder: Mutex<Option<File>>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    upstream_calls: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("upstream_calls", &self.upstream_calls())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn builder(mode: GatewayMode) -> GatewayBuilder {
        GatewayBuilder {
            mode,
            transport: None,
            retry: RetryPolicy::default(),
            requests_per_second: None,
        }
    }

    pub fn live(transport: Arc<dyn Transport>) -> Self {
        Self::builder(GatewayMode::Live)
            .transport(transport)
            .build()
            .expect("live gateway with transport always builds")
    }

    pub fn replay(fixture_path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        Self::builder(GatewayMode::Replay(fixture_path.into())).build()
    }

    pub fn mode(&self) -> &GatewayMode {
        &self.mode
    }

    /// Number of requests that reached the transport in this session.
    pub fn upstream_calls(&self) -> u64 {
        self.upstream_calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(CompletionResponse {
                text: hit.text.clone(),
                token_usage: hit.token_usage.clone(),
                cache_hit: true,
            });
        }
        let Some(transport) = &self.transport else {
            return Err(GatewayError::FixtureMiss {
                key: key.to_string(),
            });
        };
        let completion = self.send_with_retry(transport.as_ref(), request)?;
        if matches!(self.mode, GatewayMode::Record(_)) {
            self.record(&key, request, &completion)?;
        }
        self.cache.lock().unwrap().insert(key, completion.clone());
        Ok(CompletionResponse {
            text: completion.text,
            token_usage: completion.token_usage,
            cache_hit: false,
        })
    }

    /// Completes `request` and parses the reply as JSON matching `schema`.
    ///
    /// Code fences are stripped before parsing. An unusable reply is pushed
    /// back into the conversation followed by a repair instruction, up to
    /// `max_repair_attempts` extra calls.
    pub fn complete_json(
        &self,
        request: &CompletionRequest,
        schema: &JsonSchema,
        max_repair_attempts: u32,
    ) -> Result<ParsedValue, GatewayError> {
        let mut request = request.clone();
        let mut raw_outputs = Vec::new();
        let mut reason = String::new();
        for _ in 0..=max_repair_attempts {
            let response = self.complete(&request)?;
            let parsed = json::parse_model_json(&response.text)
                .and_then(|value| schema.validate(&value).map(|()| value));
            match parsed {
                Ok(value) => {
                    return Ok(ParsedValue {
                        value,
                        raw: response.text,
                    })
                }
                Err(why) => {
                    reason = why;
                    request.messages.push(ChatMessage::assistant(response.text.clone()));
                    request.messages.push(ChatMessage::user(format!(
                        "Your previous reply could not be used ({reason}). {JSON_REPAIR_INSTRUCTION}"
                    )));
                    raw_outputs.push(response.text);
                }
            }
        }
        Err(GatewayError::SchemaViolation {
            reason,
            raw_outputs,
        })
    }

    fn send_with_retry(
        &self,
        transport: &dyn Transport,
        request: &CompletionRequest,
    ) -> Result<Completion, GatewayError> {
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            self.limiter.acquire();
            self.upstream_calls.fetch_add(1, Ordering::Relaxed);
            match transport.send(request) {
                Ok(completion) => return Ok(completion),
                Err(TransportError::Auth(msg)) => return Err(GatewayError::Auth(msg)),
                Err(TransportError::Fatal(msg)) => return Err(GatewayError::Upstream(msg)),
                Err(TransportError::Transient(msg)) => {
                    log::warn!("transient transport error (attempt {attempt}/{attempts}): {msg}");
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(GatewayError::Network {
            attempts,
            message: last,
        })
    }

    fn record(
        &self,
        key: &CacheKey,
        request: &CompletionRequest,
        completion: &Completion,
    ) -> Result<(), GatewayError> {
        let record = FixtureRecord {
            key: key.clone(),
            request: request.clone(),
            response: FixtureResponse {
                text: completion.text.clone(),
                token_usage: completion.token_usage.clone(),
            },
        };
        let mut line = serde_json::to_string(&record).expect("fixture record serializes");
        line.push('\n');
        let mut guard = self.recorder.lock().unwrap();
        if let Some(file) = guard.as_mut() {
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        Ok(())
    }
}
