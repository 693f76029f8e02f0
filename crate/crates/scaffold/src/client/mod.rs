//! Provider-agnostic multimodal chat client.
//!
//! The [`Client`] wraps a [`Provider`] with a content-addressed disk cache,
//! a token-bucket rate limit, a bounded in-flight gate, retry with
//! exponential backoff, a request budget, and per-key single-flight so a
//! request sent n times costs at most one network call.

mod cache;
mod limit;
pub mod mock;
mod openai;

pub use cache::{CacheEntry, DiskCache};
pub use limit::{RateLimiter, Semaphore};
pub use mock::{EchoProvider, MockProvider};
pub use openai::OpenAiProvider;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("provider error: {0}")]
    Provider(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request budget of {limit} network calls exhausted")]
    BudgetExceeded { limit: u64 },
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

/// Message author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// Image attachment, content-addressed by its byte hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageData {
    pub mime: String,
    pub bytes: Arc<Vec<u8>>,
    pub sha256: String,
}

impl ImageData {
    pub fn new(mime: impl Into<String>, bytes: Vec<u8>) -> Self {
        let sha256 = hex::encode(Sha256::digest(&bytes));
        ImageData {
            mime: mime.into(),
            bytes: Arc::new(bytes),
            sha256,
        }
    }

    pub fn png(bytes: Vec<u8>) -> Self {
        ImageData::new("image/png", bytes)
    }
}

/// One message part: text or an image.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(ImageData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(parts: Vec<Part>) -> Self {
        Message {
            role: Role::User,
            parts,
        }
    }

    pub fn assistant_text(text: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            parts: vec![Part::Text(text.into())],
        }
    }
}

/// Model id, temperature, and token limit for a call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ClientSettings {
    fn default() -> Self {
        ClientSettings {
            model_id: "gpt-4-vision-preview".into(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// A full request: settings plus ordered messages. `cache_salt`
/// partitions the cache (used by repeated-run presets) without touching
/// the wire payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub settings: ClientSettings,
    pub messages: Vec<Message>,
    pub cache_salt: Option<String>,
}

impl ChatRequest {
    pub fn user(settings: ClientSettings, parts: Vec<Part>) -> Self {
        ChatRequest {
            settings,
            messages: vec![Message::user(parts)],
            cache_salt: None,
        }
    }

    /// All text parts joined with newlines, for fixtures and cache records.
    pub fn text_concat(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            for p in &m.parts {
                if let Part::Text(t) = p {
                    if !out.is_empty() {
                        out.push('\n');
                    }
                    out.push_str(t);
                }
            }
        }
        out
    }

    pub fn image_hashes(&self) -> Vec<String> {
        self.messages
            .iter()
            .flat_map(|m| m.parts.iter())
            .filter_map(|p| match p {
                Part::Image(i) => Some(i.sha256.clone()),
                Part::Text(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// Completion result. `from_cache` responses are bit-identical to the
/// stored record; cached and mock responses report zero latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<TokenUsage>,
    pub provider_meta: serde_json::Value,
    pub from_cache: bool,
    pub latency_ms: u64,
}

/// Digest identifying a request: model, temperature, max tokens, salt,
/// canonicalized message text, and image content hashes in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn compute(request: &ChatRequest) -> CacheKey {
        #[derive(Serialize)]
        #[serde(untagged)]
        enum CanonPart<'a> {
            Text { text: &'a str },
            Image { image: &'a str },
        }
        #[derive(Serialize)]
        struct CanonMessage<'a> {
            role: Role,
            parts: Vec<CanonPart<'a>>,
        }
        #[derive(Serialize)]
        struct Canon<'a> {
            model: &'a str,
            temperature: f64,
            max_tokens: u32,
            salt: Option<&'a str>,
            messages: Vec<CanonMessage<'a>>,
        }
        let canon = Canon {
            model: &request.settings.model_id,
            temperature: request.settings.temperature,
            max_tokens: request.settings.max_tokens,
            salt: request.cache_salt.as_deref(),
            messages: request
                .messages
                .iter()
                .map(|m| CanonMessage {
                    role: m.role,
                    parts: m
                        .parts
                        .iter()
                        .map(|p| match p {
                            Part::Text(t) => CanonPart::Text { text: t },
                            Part::Image(i) => CanonPart::Image { image: &i.sha256 },
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_string(&canon).expect("canonical request serializes");
        CacheKey {
            digest: hex::encode(Sha256::digest(json.as_bytes())),
        }
    }
}

/// What a provider reports back; `latency_ms = Some(0)` from mocks keeps
/// offline reports byte-stable, `None` lets the client measure.
#[derive(Debug, Clone)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
    pub meta: serde_json::Value,
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderErrorKind {
    /// Worth retrying: timeouts, 429, 5xx.
    Transient,
    /// Credential problems; never retried.
    Auth,
    /// Anything else; never retried.
    Fatal,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct ProviderCallError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderCallError {
    pub fn transient(message: impl Into<String>) -> Self {
        ProviderCallError {
            kind: ProviderErrorKind::Transient,
            message: message.into(),
        }
    }

    pub fn auth(message: impl Into<String>) -> Self {
        ProviderCallError {
            kind: ProviderErrorKind::Auth,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        ProviderCallError {
            kind: ProviderErrorKind::Fatal,
            message: message.into(),
        }
    }
}

/// A chat completion backend.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderCallError>;
    fn id(&self) -> &str;
}

pub struct ClientBuilder {
    provider: Arc<dyn Provider>,
    settings: ClientSettings,
    cache: Option<DiskCache>,
    limiter: Option<RateLimiter>,
    concurrency: usize,
    budget: Option<u64>,
    retries: u32,
    backoff: Duration,
}

impl ClientBuilder {
    pub fn settings(mut self, settings: ClientSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn cache_dir(mut self, dir: impl Into<std::path::PathBuf>) -> Self {
        self.cache = Some(DiskCache::new(dir.into()));
        self
    }

    /// Token-bucket rate in requests per second; `None` disables limiting.
    pub fn rate_limit(mut self, per_second: Option<f64>) -> Self {
        self.limiter = per_second.map(RateLimiter::per_second);
        self
    }

    /// Maximum in-flight provider calls.
    pub fn concurrency(mut self, k: usize) -> Self {
        self.concurrency = k.max(1);
        self
    }

    /// Ceiling on provider call attempts; `None` is unlimited.
    pub fn budget(mut self, limit: Option<u64>) -> Self {
        self.budget = limit;
        self
    }

    pub fn retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn build(self) -> Client {
        Client {
            provider: self.provider,
            settings: self.settings,
            cache: self.cache,
            limiter: self.limiter,
            gate: Semaphore::new(self.concurrency),
            budget: self.budget,
            used: AtomicU64::new(0),
            retries: self.retries,
            backoff: self.backoff,
            inflight: Mutex::new(HashMap::new()),
        }
    }
}

/// Shareable across workers; cache writes are atomic per key, the rate
/// limiter and gate are process-wide.
pub struct Client {
    provider: Arc<dyn Provider>,
    settings: ClientSettings,
    cache: Option<DiskCache>,
    limiter: Option<RateLimiter>,
    gate: Semaphore,
    budget: Option<u64>,
    used: AtomicU64,
    retries: u32,
    backoff: Duration,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Client {
    pub fn builder(provider: Arc<dyn Provider>) -> ClientBuilder {
        ClientBuilder {
            provider,
            settings: ClientSettings::default(),
            cache: None,
            limiter: None,
            concurrency: 1,
            budget: None,
            retries: 3,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn settings(&self) -> &ClientSettings {
        &self.settings
    }

    /// Provider call attempts made so far (cache hits are free).
    pub fn network_calls(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    /// Builds a single-turn user request with this client's settings.
    pub fn user_request(&self, parts: Vec<Part>) -> ChatRequest {
        ChatRequest::user(self.settings.clone(), parts)
    }

    /// Sends one request, returning the cached response when available.
    pub fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let key = CacheKey::compute(request);
        if let Some(hit) = self.cache_lookup(&key) {
            return Ok(hit);
        }

        // Single-flight: concurrent duplicates wait, then hit the cache.
        let key_lock = {
            let mut map = self.inflight.lock().expect("inflight lock");
            map.entry(key.digest.clone()).or_default().clone()
        };
        let _guard = key_lock.lock().expect("key lock");
        if let Some(hit) = self.cache_lookup(&key) {
            return Ok(hit);
        }

        let mut attempt = 0u32;
        loop {
            if let Some(limit) = self.budget {
                if self.used.load(Ordering::SeqCst) >= limit {
                    return Err(ClientError::BudgetExceeded { limit });
                }
            }
            self.used.fetch_add(1, Ordering::SeqCst);
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let started = Instant::now();
            let outcome = {
                let _permit = self.gate.acquire();
                self.provider.complete(request)
            };
            match outcome {
                Ok(reply) => {
                    let latency_ms = reply
                        .latency_ms
                        .unwrap_or_else(|| started.elapsed().as_millis() as u64);
                    let response = ChatResponse {
                        text: reply.text,
                        usage: reply.usage,
                        provider_meta: reply.meta,
                        from_cache: false,
                        latency_ms,
                    };
                    if let Some(cache) = &self.cache {
                        cache.put(&key, request, &response)?;
                    }
                    return Ok(response);
                }
                Err(e) if e.kind == ProviderErrorKind::Auth => {
                    return Err(ClientError::Auth(e.message));
                }
                Err(e) if e.kind == ProviderErrorKind::Transient && attempt < self.retries => {
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(ClientError::Provider(e.message)),
            }
        }
    }

    /// Sends a whole conversation. Roles must alternate (an optional
    /// leading system message, then user/assistant turns ending on user);
    /// caching is keyed on the entire transcript.
    pub fn send_conversation(&self, turns: &[Message]) -> Result<ChatResponse, ClientError> {
        validate_turns(turns)?;
        let request = ChatRequest {
            settings: self.settings.clone(),
            messages: turns.to_vec(),
            cache_salt: None,
        };
        self.send(&request)
    }
}

fn validate_turns(turns: &[Message]) -> Result<(), ClientError> {
    let mut expected = Role::User;
    let mut body = turns;
    if let Some(first) = turns.first() {
        if first.role == Role::System {
            body = &turns[1..];
        }
    }
    if body.is_empty() {
        return Err(ClientError::InvalidConversation("no user turn".into()));
    }
    for m in body {
        if m.role != expected {
            return Err(ClientError::InvalidConversation(format!(
                "expected {:?} turn, found {:?}",
                expected, m.role
            )));
        }
        expected = match expected {
            Role::User => Role::Assistant,
            _ => Role::User,
        };
    }
    if body.last().map(|m| m.role) != Some(Role::User) {
        return Err(ClientError::InvalidConversation(
            "conversation must end with a user turn".into(),
        ));
    }
    Ok(())
}

impl Client {
    fn cache_lookup(&self, key: &CacheKey) -> Option<ChatResponse> {
        let entry = self.cache.as_ref()?.get(key)?;
        Some(ChatResponse {
            text: entry.text,
            usage: entry.usage,
            provider_meta: entry.provider_meta,
            from_cache: true,
            latency_ms: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{CountingProvider, MockProvider, ScriptEntry};
    use super::*;
    use std::sync::Arc;

    fn text_req(settings: &ClientSettings, text: &str) -> ChatRequest {
        ChatRequest::user(settings.clone(), vec![Part::Text(text.into())])
    }

    #[test]
    fn identical_requests_hit_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockProvider::with_script(vec![ScriptEntry {
            response: "[[A]]".into(),
            match_substring: None,
        }]));
        let client = Client::builder(mock.clone())
            .cache_dir(dir.path())
            .build();
        let req = text_req(client.settings(), "hello");
        let first = client.send(&req).unwrap();
        assert!(!first.from_cache);
        let second = client.send(&req).unwrap();
        assert!(second.from_cache);
        assert_eq!(first.text, second.text);
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn image_byte_change_is_a_cache_miss() {
        let settings = ClientSettings::default();
        let a = ChatRequest::user(
            settings.clone(),
            vec![
                Part::Text("q".into()),
                Part::Image(ImageData::png(vec![1, 2, 3])),
            ],
        );
        let b = ChatRequest::user(
            settings,
            vec![
                Part::Text("q".into()),
                Part::Image(ImageData::png(vec![1, 2, 4])),
            ],
        );
        assert_ne!(CacheKey::compute(&a), CacheKey::compute(&b));
    }

    #[test]
    fn salt_partitions_the_key() {
        let settings = ClientSettings::default();
        let a = text_req(&settings, "q");
        let mut b = a.clone();
        b.cache_salt = Some("run2".into());
        assert_ne!(CacheKey::compute(&a), CacheKey::compute(&b));
    }

    #[test]
    fn mock_digest_fixtures_win_over_script() {
        let settings = ClientSettings::default();
        let req = text_req(&settings, "the exact one");
        let digest = CacheKey::compute(&req).digest;
        let mut mock = MockProvider::with_script(vec![ScriptEntry {
            response: "scripted".into(),
            match_substring: None,
        }]);
        mock.insert_digest(digest, "exact");
        let client = Client::builder(Arc::new(mock)).build();
        assert_eq!(client.send(&req).unwrap().text, "exact");
    }

    #[test]
    fn script_matches_by_substring_in_order() {
        let settings = ClientSettings::default();
        let mock = MockProvider::with_script(vec![
            ScriptEntry {
                response: "first".into(),
                match_substring: Some("alpha".into()),
            },
            ScriptEntry {
                response: "second".into(),
                match_substring: Some("beta".into()),
            },
        ]);
        let client = Client::builder(Arc::new(mock)).build();
        assert_eq!(
            client.send(&text_req(&settings, "ask beta now")).unwrap().text,
            "second"
        );
        assert_eq!(
            client.send(&text_req(&settings, "ask alpha now")).unwrap().text,
            "first"
        );
        assert!(client.send(&text_req(&settings, "ask gamma")).is_err());
    }

    #[test]
    fn transient_failures_are_retried() {
        let provider = Arc::new(CountingProvider::failing_then("ok", 2));
        let client = Client::builder(provider.clone())
            .retries(3)
            .backoff(Duration::from_millis(1))
            .build();
        let resp = client
            .send(&text_req(&ClientSettings::default(), "q"))
            .unwrap();
        assert_eq!(resp.text, "ok");
        assert_eq!(provider.calls(), 3);
    }

    #[test]
    fn retries_exhaust_to_provider_error() {
        let provider = Arc::new(CountingProvider::failing_then("ok", 10));
        let client = Client::builder(provider)
            .retries(2)
            .backoff(Duration::from_millis(1))
            .build();
        let err = client
            .send(&text_req(&ClientSettings::default(), "q"))
            .unwrap_err();
        assert!(matches!(err, ClientError::Provider(_)));
    }

    #[test]
    fn budget_is_enforced() {
        let provider = Arc::new(CountingProvider::always("ok"));
        let client = Client::builder(provider).budget(Some(2)).build();
        let s = ClientSettings::default();
        client.send(&text_req(&s, "a")).unwrap();
        client.send(&text_req(&s, "b")).unwrap();
        let err = client.send(&text_req(&s, "c")).unwrap_err();
        assert!(matches!(err, ClientError::BudgetExceeded { limit: 2 }));
    }

    #[test]
    fn conversation_roles_validated() {
        let bad = vec![Message::assistant_text("hi")];
        let client = Client::builder(Arc::new(CountingProvider::always("x"))).build();
        assert!(matches!(
            client.send_conversation(&bad),
            Err(ClientError::InvalidConversation(_))
        ));
        let good = vec![
            Message::user(vec![Part::Text("locate".into())]),
            Message::assistant_text("[[(1,2)]]"),
            Message::user(vec![Part::Text("answer".into())]),
        ];
        assert!(client.send_conversation(&good).is_ok());
    }

    #[test]
    fn one_turn_conversation_equals_send() {
        let dir = tempfile::tempdir().unwrap();
        let client = Client::builder(Arc::new(CountingProvider::always("same")))
            .cache_dir(dir.path())
            .build();
        let parts = vec![Part::Text("q".into())];
        let via_send = client.send(&client.user_request(parts.clone())).unwrap();
        let via_conv = client.send_conversation(&[Message::user(parts)]).unwrap();
        assert_eq!(via_send.text, via_conv.text);
        assert!(via_conv.from_cache, "same transcript should hit the cache");
    }

    #[test]
    fn corrupt_cache_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let client = Client::builder(Arc::new(CountingProvider::always("fresh")))
            .cache_dir(dir.path())
            .build();
        let req = text_req(&ClientSettings::default(), "q");
        let key = CacheKey::compute(&req);
        let path = dir
            .path()
            .join(&key.digest[..2])
            .join(format!("{}.json", key.digest));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, b"{ truncated").unwrap();
        let resp = client.send(&req).unwrap();
        assert!(!resp.from_cache);
        assert_eq!(resp.text, "fresh");
        // The bad entry was replaced by a valid one.
        let resp = client.send(&req).unwrap();
        assert!(resp.from_cache);
    }
}
