//! Completion backends: an HTTP client for OpenAI-style `/completions`
//! endpoints, a scripted mock, and a retrying wrapper.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use std::{env, fs, path::Path};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{Prompt, PromptConfig};

pub const ENV_API_KEY: &str = "MEDENS_API_KEY";
pub const ENV_API_BASE: &str = "MEDENS_API_BASE";
pub const ENV_MODEL: &str = "MEDENS_MODEL";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("request timed out after {after:?} ({attempts} attempt(s))")]
    Timeout { after: Duration, attempts: u32 },
    #[error("rate limited ({attempts} attempt(s))")]
    RateLimited {
        retry_after: Option<Duration>,
        attempts: u32,
    },
    #[error("HTTP {status}: {body} ({attempts} attempt(s))")]
    Http { status: u16, body: String, attempts: u32 },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Timeouts, 429 and 5xx responses are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout { .. } | BackendError::RateLimited { .. } => true,
            BackendError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }

    fn with_attempts(self, n: u32) -> Self {
        match self {
            BackendError::Timeout { after, .. } => BackendError::Timeout { after, attempts: n },
            BackendError::RateLimited { retry_after, .. } => BackendError::RateLimited {
                retry_after,
                attempts: n,
            },
            BackendError::Http { status, body, .. } => BackendError::Http {
                status,
                body,
                attempts: n,
            },
            other => other,
        }
    }
}

/// Parameters of one completion call.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub stop: Vec<String>,
}

impl CompletionRequest {
    /// Request with the default sampling settings: 128 tokens, temperature
    /// 0.6, no presence or frequency penalty.
    pub fn new(prompt: &Prompt) -> Self {
        CompletionRequest {
            prompt: prompt.text.clone(),
            max_tokens: 128,
            temperature: 0.6,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            stop: prompt.stop_sequences.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.stop.is_empty() {
            return Err(BackendError::InvalidRequest("stop sequences must be non-empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    presence_penalty: f64,
    frequency_penalty: f64,
    stop: &'a [String],
}

/// The JSON body POSTed to `{base}/completions`. Field order is fixed.
pub fn wire_body(request: &CompletionRequest, model: &str) -> String {
    serde_json::to_string(&WireRequest {
        model,
        prompt: &request.prompt,
        max_tokens: request.max_tokens,
        temperature: request.temperature,
        presence_penalty: request.presence_penalty,
        frequency_penalty: request.frequency_penalty,
        stop: &request.stop,
    })
    .expect("wire request serializes")
}

/// Something that turns a prompt into raw completion text.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;

    /// Stable identifier recorded in synthetic provenance.
    fn backend_id(&self) -> String;

    /// How many calls callers may issue at once.
    fn max_concurrency(&self) -> usize {
        1
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
}

// ---- HTTP ----

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl EndpointConfig {
    /// Reads the key, base URL and model from the environment.
    pub fn from_env() -> Result<Self, BackendError> {
        let api_key = env::var(ENV_API_KEY)
            .map_err(|_| BackendError::Config(format!("{ENV_API_KEY} is not set")))?;
        let model = env::var(ENV_MODEL)
            .map_err(|_| BackendError::Config(format!("{ENV_MODEL} is not set")))?;
        let base_url = env::var(ENV_API_BASE).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Ok(EndpointConfig {
            base_url,
            api_key,
            model,
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        })
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let gate = Gate::new(config.max_in_flight);
        Ok(HttpBackend { config, client, gate })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 200;
    match body.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

/// Extracts `choices[0].text` from a completions response body.
pub fn parse_completion_response(body: &str) -> Result<String, BackendError> {
    #[derive(Deserialize)]
    struct Choice {
        text: Option<String>,
    }
    #[derive(Deserialize)]
    struct Response {
        choices: Option<Vec<Choice>>,
    }
    let resp: Response = serde_json::from_str(body)
        .map_err(|e| BackendError::Protocol(format!("invalid JSON: {e}")))?;
    resp.choices
        .ok_or_else(|| BackendError::Protocol("missing `choices`".into()))?
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("empty `choices`".into()))?
        .text
        .ok_or_else(|| BackendError::Protocol("missing `choices[0].text`".into()))
}

/// Performs one POST to `{base}/completions`.
pub fn http_complete(
    client: &reqwest::blocking::Client,
    config: &EndpointConfig,
    request: &CompletionRequest,
) -> Result<String, BackendError> {
    request.validate()?;
    let url = format!("{}/completions", config.base_url.trim_end_matches('/'));
    let response = client
        .post(url)
        .bearer_auth(&config.api_key)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(wire_body(request, &config.model))
        .send()
        .map_err(|e| classify(e, config.timeout))?;

    let status = response.status().as_u16();
    let retry_after = response
        .headers()
        .get(reqwest::header::RETRY_AFTER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs);
    let body = response.text().map_err(|e| classify(e, config.timeout))?;

    match status {
        200..=299 => parse_completion_response(&body),
        429 => Err(BackendError::RateLimited {
            retry_after,
            attempts: 1,
        }),
        _ => Err(BackendError::Http {
            status,
            body: excerpt(&body),
            attempts: 1,
        }),
    }
}

fn classify(e: reqwest::Error, timeout: Duration) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout {
            after: timeout,
            attempts: 1,
        }
    } else {
        BackendError::Transport(e.to_string())
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let _permit = self.gate.acquire();
        http_complete(&self.client, &self.config, request)
    }

    fn backend_id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn max_concurrency(&self) -> usize {
        self.config.max_in_flight.max(1)
    }
}

// ---- mock ----

/// Hex SHA-256 of a prompt; the key of mock scripts.
pub fn prompt_digest(prompt: &str) -> String {
    format!("{:x}", Sha256::digest(prompt.as_bytes()))
}

/// What the mock answers once a prompt's script is exhausted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockDefault {
    Fixed(String),
    /// Echo one turn of the target snippet, picked by the prompt digest, so
    /// different priming sets give different but reproducible candidates.
    ExtractiveEcho,
}

/// Deterministic offline backend replaying scripted responses per prompt.
#[derive(Debug)]
pub struct MockBackend {
    script: HashMap<String, Vec<String>>,
    calls: Mutex<HashMap<String, usize>>,
    default: MockDefault,
}

#[derive(Debug, Deserialize)]
struct ScriptLine {
    prompt: Option<String>,
    prompt_sha256: Option<String>,
    responses: Vec<String>,
}

impl MockBackend {
    pub fn new(default: MockDefault) -> Self {
        MockBackend {
            script: HashMap::new(),
            calls: Mutex::new(HashMap::new()),
            default,
        }
    }

    pub fn fixed(response: impl Into<String>) -> Self {
        MockBackend::new(MockDefault::Fixed(response.into()))
    }

    /// Scripts the responses for an exact prompt text.
    pub fn with_script(self, prompt: &str, responses: Vec<String>) -> Self {
        self.with_digest_script(prompt_digest(prompt), responses)
    }

    pub fn with_digest_script(mut self, digest: String, responses: Vec<String>) -> Self {
        self.script.insert(digest, responses);
        self
    }

    /// Loads a script file: one JSON object per line with `responses` and
    /// either `prompt` or `prompt_sha256`.
    pub fn load_script(mut self, path: &Path) -> Result<Self, BackendError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptLine = serde_json::from_str(line)
                .map_err(|e| BackendError::Config(format!("script line {}: {e}", i + 1)))?;
            let digest = match (entry.prompt, entry.prompt_sha256) {
                (Some(p), None) => prompt_digest(&p),
                (None, Some(d)) => d,
                _ => {
                    return Err(BackendError::Config(format!(
                        "script line {}: exactly one of `prompt` or `prompt_sha256` is required",
                        i + 1
                    )))
                }
            };
            self.script.insert(digest, entry.responses);
        }
        Ok(self)
    }

    /// Replays the next scripted response for `prompt`.
    pub fn mock_complete(&self, prompt: &str) -> String {
        let digest = prompt_digest(prompt);
        let index = {
            let mut calls = self.calls.lock().expect("mock counter lock");
            let n = calls.entry(digest.clone()).or_insert(0);
            let i = *n;
            *n += 1;
            i
        };
        if let Some(r) = self.script.get(&digest).and_then(|s| s.get(index)) {
            return r.clone();
        }
        match &self.default {
            MockDefault::Fixed(s) => s.clone(),
            MockDefault::ExtractiveEcho => echo_target_turn(prompt, &digest),
        }
    }
}

fn echo_target_turn(prompt: &str, digest: &str) -> String {
    let cfg = PromptConfig::default();
    let body = prompt.strip_suffix(cfg.summarize_token.as_str()).unwrap_or(prompt);
    let target = match body.rfind(cfg.stop_token.as_str()) {
        Some(i) => &body[i + cfg.stop_token.len()..],
        None => body,
    };
    let turns: Vec<&str> = target.split(cfg.sep_token.as_str()).map(str::trim).collect();
    let pick = u64::from_str_radix(&digest[..8], 16).unwrap_or(0) as usize % turns.len();
    format!("{}{}", turns[pick], cfg.stop_token)
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        Ok(self.mock_complete(&request.prompt))
    }

    fn backend_id(&self) -> String {
        "mock".into()
    }
}

// ---- retries ----

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    /// Scale each delay by a random factor in [0.5, 1.0].
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, given that `attempt` (1-based) failed.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let exp = self
            .base_backoff
            .saturating_mul(1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX));
        let capped = exp.min(self.max_backoff);
        if self.jitter {
            capped.mul_f64(rand::rng().random_range(0.5..=1.0))
        } else {
            capped
        }
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// Backend wrapper retrying transient failures with exponential backoff.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
    sleep: Sleeper,
}

pub fn with_retries<B: CompletionBackend>(
    backend: B,
    policy: RetryPolicy,
) -> Result<Retrying<B>, BackendError> {
    if policy.max_attempts == 0 {
        return Err(BackendError::Config("max_attempts must be at least 1".into()));
    }
    Ok(Retrying {
        inner: backend,
        policy,
        sleep: Box::new(std::thread::sleep),
    })
}

impl<B> Retrying<B> {
    /// Replaces `thread::sleep`, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for Retrying<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut attempt = 1;
        loop {
            match self.inner.complete(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.policy.max_attempts => {
                    let mut delay = self.policy.backoff(attempt);
                    if let BackendError::RateLimited {
                        retry_after: Some(r), ..
                    } = &e
                    {
                        delay = delay.max(*r);
                    }
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    (self.sleep)(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e.with_attempts(attempt)),
            }
        }
    }

    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn max_concurrency(&self) -> usize {
        self.inner.max_concurrency()
    }
}
