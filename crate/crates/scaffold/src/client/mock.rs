//! Offline providers: scripted fixtures, ground-truth echo, counting fakes.
//!
//! The mock resolves a request by digest first (exact fixtures), then by
//! the first unconsumed script entry whose `match_substring` appears in the
//! request text (sequential fixtures). Mock replies report zero latency so
//! offline reports are byte-stable.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, Provider, ProviderCallError, ProviderReply};

/// One sequential fixture: consumed once, optionally gated on a substring
/// of the request text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub response: String,
    #[serde(default)]
    pub match_substring: Option<String>,
}

#[derive(Default)]
pub struct MockProvider {
    by_digest: HashMap<String, String>,
    script: Mutex<Vec<Option<ScriptEntry>>>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(entries: Vec<ScriptEntry>) -> Self {
        MockProvider {
            by_digest: HashMap::new(),
            script: Mutex::new(entries.into_iter().map(Some).collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn insert_digest(&mut self, digest: String, response: impl Into<String>) {
        self.by_digest.insert(digest, response.into());
    }

    /// Loads a fixture directory: `script.jsonl` with one [`ScriptEntry`]
    /// per line, plus optional `by_digest/<digest>.txt` exact fixtures.
    pub fn from_fixture_dir(dir: &Path) -> std::io::Result<Self> {
        let mut provider = MockProvider::new();
        let script_path = dir.join("script.jsonl");
        if script_path.exists() {
            let mut entries = Vec::new();
            for (lineno, line) in std::fs::read_to_string(&script_path)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", script_path.display(), lineno + 1),
                    )
                })?;
                entries.push(Some(entry));
            }
            provider.script = Mutex::new(entries);
        }
        let digest_dir = dir.join("by_digest");
        if digest_dir.is_dir() {
            for file in std::fs::read_dir(&digest_dir)? {
                let path = file?.path();
                if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                    let digest = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or_default()
                        .to_string();
                    provider
                        .by_digest
                        .insert(digest, std::fs::read_to_string(&path)?);
                }
            }
        }
        Ok(provider)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn reply(text: String) -> ProviderReply {
    ProviderReply {
        text,
        usage: None,
        meta: serde_json::json!({"provider": "mock"}),
        latency_ms: Some(0),
    }
}

impl Provider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderCallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = CacheKey::compute(request).digest;
        if let Some(text) = self.by_digest.get(&digest) {
            return Ok(reply(text.clone()));
        }
        let request_text = request.text_concat();
        let mut script = self.script.lock().expect("script lock");
        let slot = script.iter_mut().find(|slot| match slot {
            Some(entry) => entry
                .match_substring
                .as_ref()
                .is_none_or(|needle| request_text.contains(needle.as_str())),
            None => false,
        });
        match slot {
            Some(slot) => Ok(reply(slot.take().expect("slot checked").response)),
            None => Err(ProviderCallError::fatal(format!(
                "mock: no fixture for digest {digest} and no script entry matches"
            ))),
        }
    }

    fn id(&self) -> &str {
        "mock"
    }
}

/// Answers every request with the ground truth of the sample whose
/// question appears in the request text. Used to check pipeline
/// neutrality: with this provider every run must score 100.
pub struct EchoProvider {
    answers: Vec<(String, String)>,
    calls: AtomicUsize,
}

impl EchoProvider {
    /// `(question, ground_truth)` pairs; longer questions are matched
    /// first so prefixes cannot shadow one another.
    pub fn new(mut answers: Vec<(String, String)>) -> Self {
        answers.sort_by_key(|(q, _)| std::cmp::Reverse(q.len()));
        EchoProvider {
            answers,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for EchoProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderCallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = request.text_concat();
        for (question, truth) in &self.answers {
            if !question.is_empty() && text.contains(question.as_str()) {
                return Ok(reply(format!("The answer is [[{truth}]]")));
            }
        }
        Err(ProviderCallError::fatal(
            "echo: no known question in request",
        ))
    }

    fn id(&self) -> &str {
        "echo"
    }
}

/// Fake provider for cache/retry/concurrency tests: counts calls, tracks
/// peak concurrency, and can fail the first n attempts.
pub struct CountingProvider {
    response: String,
    fail_first: usize,
    delay: std::time::Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl CountingProvider {
    pub fn always(response: impl Into<String>) -> Self {
        Self::failing_then(response, 0)
    }

    pub fn failing_then(response: impl Into<String>, fail_first: usize) -> Self {
        CountingProvider {
            response: response.into(),
            fail_first,
            delay: std::time::Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Holds each call open for `delay` so concurrency is observable.
    pub fn with_delay(mut self, delay: std::time::Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Provider for CountingProvider {
    fn complete(&self, _request: &ChatRequest) -> Result<ProviderReply, ProviderCallError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if call < self.fail_first {
            return Err(ProviderCallError::transient("synthetic failure"));
        }
        Ok(ProviderReply {
            text: self.response.clone(),
            usage: None,
            meta: serde_json::json!({"provider": "counting"}),
            latency_ms: Some(0),
        })
    }

    fn id(&self) -> &str {
        "counting"
    }
}
