//! Chat-completion access for task evaluation and LLM-backed edits.
//!
//! A [`Gateway`] wraps a [`Backend`] with a response cache, bounded retries
//! with exponential backoff and a global limit on uncached calls in flight.

mod backend;
mod cache;
mod edit;
mod json;

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use backend::{Backend, BackendReply, EchoBackend, HttpBackend, LabelOracle, ScriptedBackend, TruncateBackend};
pub use cache::ResponseCache;
pub use edit::{
    paraphrase_call, paraphrase_prompt, summarise_call, summarise_prompt, LlmRewriter, PARAPHRASE_TEMPLATE,
    SUMMARISE_TEMPLATE,
};
pub use json::extract_json_value;

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;
pub const DEFAULT_MAX_INFLIGHT: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("backend returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("no usable answer in reply: {0}")]
    Parse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
    #[error("cache: {0}")]
    Cache(String),
}

impl LlmError {
    fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) | LlmError::Timeout => true,
            LlmError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }
}

/// Decoding settings shared by every request to one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Sampling is off unless explicitly enabled.
    pub sampling: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model: "target".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            sampling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sampling: bool,
}

impl LlmRequest {
    pub fn new(settings: &ModelSettings, messages: Vec<Message>) -> Self {
        Self {
            model: settings.model.clone(),
            messages,
            temperature: settings.temperature,
            max_tokens: settings.max_tokens,
            sampling: settings.sampling,
        }
    }

    pub fn user(settings: &ModelSettings, content: impl Into<String>) -> Self {
        Self::new(settings, vec![Message::user(content)])
    }

    /// SHA-256 over the canonical JSON of model, messages and decoding
    /// parameters.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("requests serialise");
        crate::seeds::sha256_hex(canonical.as_bytes())
    }

    pub fn last_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub text: String,
    pub latency: Duration,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `n + 1` after `n` failures: `base * 2^(n-1)`.
    pub fn delay_after(&self, failures: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(failures.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub requests: u64,
    pub cache_hits: u64,
    pub backend_calls: u64,
    pub retries: u64,
    pub failures: u64,
    pub peak_inflight: usize,
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

struct Limiter {
    max: usize,
    state: Mutex<(usize, usize)>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().expect("limiter lock");
        while state.0 >= self.max {
            state = self.cv.wait(state).expect("limiter lock");
        }
        state.0 += 1;
        state.1 = state.1.max(state.0);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().expect("limiter lock").0 -= 1;
        self.0.cv.notify_one();
    }
}

/// Thread-safe entry point for completions.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    sleeper: Sleeper,
    limiter: Limiter,
    stats: Mutex<CallStats>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: Some(ResponseCache::in_memory()),
            retry: RetryPolicy::default(),
            sleeper: Arc::new(std::thread::sleep),
            limiter: Limiter {
                max: DEFAULT_MAX_INFLIGHT,
                state: Mutex::new((0, 0)),
                cv: Condvar::new(),
            },
            stats: Mutex::new(CallStats::default()),
        }
    }

    /// Replaces the cache; `None` disables caching.
    pub fn with_cache(mut self, cache: Option<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Replaces the function used to wait between retries.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn with_max_inflight(mut self, max: usize) -> Self {
        self.limiter.max = max.max(1);
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn stats(&self) -> CallStats {
        let mut stats = *self.stats.lock().expect("stats lock");
        stats.peak_inflight = self.limiter.state.lock().expect("limiter lock").1;
        stats
    }

    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let started = Instant::now();
        let digest = req.digest();
        self.bump(|s| s.requests += 1);
        if let Some(text) = self.cache.as_ref().and_then(|c| c.get(&digest)) {
            self.bump(|s| s.cache_hits += 1);
            return Ok(LlmResponse {
                text,
                latency: started.elapsed(),
                prompt_tokens: None,
                completion_tokens: None,
                cache_hit: true,
            });
        }
        let reply = {
            let _permit = self.limiter.acquire();
            self.call_with_retry(req)
        };
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                self.bump(|s| s.failures += 1);
                return Err(e);
            }
        };
        if let Some(cache) = &self.cache {
            cache.insert(&digest, &reply.text)?;
        }
        Ok(LlmResponse {
            text: reply.text,
            latency: started.elapsed(),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            cache_hit: false,
        })
    }

    fn call_with_retry(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
        let attempts = self.retry.attempts.max(1);
        let mut failures = 0;
        loop {
            self.bump(|s| s.backend_calls += 1);
            match self.backend.complete(req) {
                Ok(reply) => return Ok(reply),
                Err(e) if e.is_retryable() => {
                    failures += 1;
                    if failures >= attempts {
                        return Err(LlmError::Exhausted {
                            attempts,
                            last: Box::new(e),
                        });
                    }
                    self.bump(|s| s.retries += 1);
                    (self.sleeper)(self.retry.delay_after(failures));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn bump(&self, f: impl FnOnce(&mut CallStats)) {
        f(&mut self.stats.lock().expect("stats lock"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn settings() -> ModelSettings {
        ModelSettings::default()
    }

    #[test]
    fn defaults_follow_deterministic_decoding() {
        let s = settings();
        assert_eq!(s.temperature, 0.0);
        assert_eq!(s.max_tokens, 2048);
        assert!(!s.sampling);
    }

    #[test]
    fn second_identical_request_hits_cache() {
        let gw = Gateway::new(Arc::new(EchoBackend));
        let req = LlmRequest::user(&settings(), "hello");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert!(!first.cache_hit);
        assert!(second.cache_hit);
        assert_eq!(first.text, "hello");
        assert_eq!(second.text, "hello");
        let stats = gw.stats();
        assert_eq!((stats.requests, stats.cache_hits, stats.backend_calls), (2, 1, 1));
    }

    #[test]
    fn digest_covers_decoding_parameters() {
        let a = LlmRequest::user(&settings(), "x");
        let mut b = a.clone();
        b.temperature = 0.7;
        let mut c = a.clone();
        c.model = "other".into();
        assert_ne!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    struct Flaky {
        failures_left: AtomicUsize,
        calls: AtomicUsize,
    }

    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(LlmError::Transport("connection reset".into()));
            }
            Ok(BackendReply::text(req.last_user_message()))
        }
    }

    fn flaky(failures: usize) -> (Arc<Flaky>, Gateway, Arc<Mutex<Vec<Duration>>>) {
        let backend = Arc::new(Flaky {
            failures_left: AtomicUsize::new(failures),
            calls: AtomicUsize::new(0),
        });
        let slept = Arc::new(Mutex::new(Vec::new()));
        let log = slept.clone();
        let gw = Gateway::new(backend.clone()).with_sleeper(move |d| log.lock().unwrap().push(d));
        (backend, gw, slept)
    }

    #[test]
    fn retries_with_exponential_backoff() {
        let (backend, gw, slept) = flaky(2);
        let out = gw.complete(&LlmRequest::user(&settings(), "x")).unwrap();
        assert_eq!(out.text, "x");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        assert_eq!(*slept.lock().unwrap(), [Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (backend, gw, slept) = flaky(10);
        let err = gw.complete(&LlmRequest::user(&settings(), "x")).unwrap_err();
        assert!(matches!(err, LlmError::Exhausted { attempts: 3, .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        assert_eq!(slept.lock().unwrap().len(), 2);
        assert_eq!(gw.stats().failures, 1);
    }

    #[test]
    fn non_retryable_errors_fail_fast() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::new(Default::default(), None)));
        let err = gw.complete(&LlmRequest::user(&settings(), "unknown")).unwrap_err();
        assert!(matches!(err, LlmError::Malformed(_)));
        assert_eq!(gw.stats().backend_calls, 1);
    }

    struct Slow;

    impl Backend for Slow {
        fn name(&self) -> &str {
            "slow"
        }

        fn complete(&self, req: &LlmRequest) -> Result<BackendReply, LlmError> {
            std::thread::sleep(Duration::from_millis(5));
            Ok(BackendReply::text(req.last_user_message()))
        }
    }

    #[test]
    fn inflight_bound_holds() {
        use rayon::prelude::*;
        let gw = Gateway::new(Arc::new(Slow)).with_max_inflight(3);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        pool.install(|| {
            (0..40).into_par_iter().for_each(|i| {
                gw.complete(&LlmRequest::user(&settings(), format!("m{i}"))).unwrap();
            })
        });
        let peak = gw.stats().peak_inflight;
        assert!((1..=3).contains(&peak), "peak {peak}");
    }

    #[test]
    fn cache_is_transparent() {
        let requests: Vec<LlmRequest> = ["a", "b", "a", "c", "b"]
            .iter()
            .map(|m| LlmRequest::user(&settings(), *m))
            .collect();
        let cached = Gateway::new(Arc::new(TruncateBackend));
        let uncached = Gateway::new(Arc::new(TruncateBackend)).with_cache(None);
        for r in &requests {
            assert_eq!(cached.complete(r).unwrap().text, uncached.complete(r).unwrap().text);
        }
        assert_eq!(uncached.stats().backend_calls, 5);
        assert_eq!(cached.stats().backend_calls, 3);
    }
}
