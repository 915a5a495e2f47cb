//! Completion backends.
//!
//! - [`HttpBackend`] speaks the chat-completion wire format.
//! - [`MockBackend`] answers from a line-delimited script.
//! - [`ReplayBackend`] serves cached responses from disk and records misses
//!   through an optional inner backend.
//!
//! Every request is sent at temperature 0.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sampling temperature of every request. Not configurable.
pub const TEMPERATURE: f64 = 0.0;
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("mock script has no response for {0}")]
    ScriptMiss(String),
    #[error("replay cache has no entry for key {0} and no live backend")]
    CacheMiss(String),
    #[error("duplicate script key {0}")]
    DuplicateKey(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("malformed script line {line}: {message}")]
    MalformedScript { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BackendError + '_ {
    move |source| BackendError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Pipeline stage a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Retry,
    Consistency,
}

/// A prompt plus the pipeline position that produced it. Only the mock
/// backend looks at the position.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub relation: &'a str,
    pub shot_index: usize,
    pub stage: Stage,
}

impl<'a> CompletionRequest<'a> {
    pub fn bare(prompt: &'a str) -> Self {
        Self {
            prompt,
            relation: "",
            shot_index: 0,
            stage: Stage::Initial,
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;

    fn model_name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
    Replay,
}

/// Exponential backoff for rate-limited requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffPolicy {
    pub base: Duration,
    pub factor: u32,
    pub cap: Duration,
    pub max_attempts: usize,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2,
            cap: Duration::from_secs(60),
            max_attempts: 8,
        }
    }
}

impl BackoffPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: usize) -> Duration {
        let mut delay = self.base;
        for _ in 0..attempt {
            delay = delay.saturating_mul(self.factor);
            if delay >= self.cap {
                return self.cap;
            }
        }
        delay.min(self.cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub transport_retries: usize,
    pub cache_dir: Option<PathBuf>,
    pub script_path: Option<PathBuf>,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub backoff: BackoffPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-3.5-turbo".into(),
            max_tokens: 256,
            timeout: Duration::from_secs(60),
            transport_retries: 3,
            cache_dir: None,
            script_path: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            backoff: BackoffPolicy::default(),
        }
    }
}

impl BackendConfig {
    pub fn temperature(&self) -> f64 {
        TEMPERATURE
    }
}

/// Instantiates the backend described by `config`.
///
/// A replay backend records misses through a mock inner backend when
/// `script_path` is set, through http when `endpoint_url` is non-empty, and
/// otherwise only serves the cache.
pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn CompletionBackend>, BackendError> {
    match config.kind {
        BackendKind::Http => Ok(Arc::new(HttpBackend::new(config.clone())?)),
        BackendKind::Mock => {
            let path = config
                .script_path
                .as_deref()
                .ok_or_else(|| BackendError::Config("mock backend needs a script path".into()))?;
            Ok(Arc::new(MockBackend::load(path, &config.model_name)?))
        }
        BackendKind::Replay => {
            let cache_dir = config
                .cache_dir
                .clone()
                .ok_or_else(|| BackendError::Config("replay backend needs a cache dir".into()))?;
            let inner: Option<Arc<dyn CompletionBackend>> = if config.script_path.is_some() {
                build_backend(&BackendConfig {
                    kind: BackendKind::Mock,
                    ..config.clone()
                })
                .map(Some)?
            } else if !config.endpoint_url.is_empty() {
                Some(Arc::new(HttpBackend::new(config.clone())?))
            } else {
                None
            };
            Ok(Arc::new(ReplayBackend::new(
                cache_dir,
                config.model_name.clone(),
                inner,
            )?))
        }
    }
}

pub fn sha256_hex(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Key for prompt-addressed mock entries.
pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(&[prompt])
}

/// Key for replay cache entries.
pub fn cache_key(model_name: &str, prompt: &str) -> String {
    sha256_hex(&[model_name, prompt])
}

// ---------------------------------------------------------------------------
// Mock

/// How a script line is addressed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptKey {
    Prompt {
        prompt_sha256: String,
    },
    Position {
        relation: String,
        shot: usize,
        stage: Stage,
    },
}

impl std::fmt::Display for ScriptKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScriptKey::Prompt { prompt_sha256 } => write!(f, "prompt {prompt_sha256}"),
            ScriptKey::Position {
                relation,
                shot,
                stage,
            } => write!(f, "({relation:?}, shot {shot}, {stage:?})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptLine {
    #[serde(flatten)]
    pub key: ScriptKey,
    pub response: String,
}

/// Scripted responses, one json object per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockScript {
    lines: Vec<ScriptLine>,
}

impl MockScript {
    pub fn new(lines: Vec<ScriptLine>) -> Result<Self, BackendError> {
        let mut seen = std::collections::HashSet::new();
        for line in &lines {
            if !seen.insert(&line.key) {
                return Err(BackendError::DuplicateKey(line.key.to_string()));
            }
        }
        Ok(Self { lines })
    }

    pub fn lines(&self) -> &[ScriptLine] {
        &self.lines
    }

    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let mut lines = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine =
                serde_json::from_str(line).map_err(|e| BackendError::MalformedScript {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            lines.push(parsed);
        }
        Self::new(lines)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("script line serialises"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        fs::write(path, self.to_jsonl()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }
}

/// Builds a script keyed by pipeline position: the `shot`-th call for
/// `relation` at `stage` gets `response`. Consistency calls use shot 0.
pub fn mock_script_for_pipeline<R, S>(
    entries: impl IntoIterator<Item = (R, usize, Stage, S)>,
) -> Result<MockScript, BackendError>
where
    R: Into<String>,
    S: Into<String>,
{
    MockScript::new(
        entries
            .into_iter()
            .map(|(relation, shot, stage, response)| ScriptLine {
                key: ScriptKey::Position {
                    relation: relation.into(),
                    shot,
                    stage,
                },
                response: response.into(),
            })
            .collect(),
    )
}

pub struct MockBackend {
    model_name: String,
    by_prompt: HashMap<String, String>,
    by_position: HashMap<(String, usize, Stage), String>,
}

impl MockBackend {
    pub fn new(script: MockScript, model_name: impl Into<String>) -> Self {
        let mut by_prompt = HashMap::new();
        let mut by_position = HashMap::new();
        for line in script.lines {
            match line.key {
                ScriptKey::Prompt { prompt_sha256 } => {
                    by_prompt.insert(prompt_sha256, line.response);
                }
                ScriptKey::Position {
                    relation,
                    shot,
                    stage,
                } => {
                    by_position.insert((relation, shot, stage), line.response);
                }
            }
        }
        Self {
            model_name: model_name.into(),
            by_prompt,
            by_position,
        }
    }

    pub fn load(path: &Path, model_name: &str) -> Result<Self, BackendError> {
        Ok(Self::new(MockScript::load(path)?, model_name))
    }
}

impl CompletionBackend for MockBackend {
    /// Prompt-hash entries take precedence over positional ones.
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        if let Some(response) = self.by_prompt.get(&prompt_hash(request.prompt)) {
            return Ok(response.clone());
        }
        let key = (
            request.relation.to_owned(),
            request.shot_index,
            request.stage,
        );
        self.by_position.get(&key).cloned().ok_or_else(|| {
            BackendError::ScriptMiss(format!(
                "({:?}, shot {}, {:?})",
                request.relation, request.shot_index, request.stage
            ))
        })
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

// ---------------------------------------------------------------------------
// Replay cache

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    prompt: String,
    response: String,
}

/// Disk cache of responses keyed by `(model_name, prompt)`. Entries are
/// write-once files named `<key>.json`.
pub struct ReplayBackend {
    cache_dir: PathBuf,
    model_name: String,
    inner: Option<Arc<dyn CompletionBackend>>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ReplayBackend {
    pub fn new(
        cache_dir: PathBuf,
        model_name: String,
        inner: Option<Arc<dyn CompletionBackend>>,
    ) -> Result<Self, BackendError> {
        fs::create_dir_all(&cache_dir).map_err(io_err(&cache_dir))?;
        Ok(Self {
            cache_dir,
            model_name,
            inner,
            key_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.cache_dir.join(format!("{key}.json"))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().expect("cache lock poisoned");
        locks.entry(key.to_owned()).or_default().clone()
    }

    fn read_entry(&self, path: &Path) -> Result<Option<String>, BackendError> {
        match fs::read_to_string(path) {
            Ok(text) => {
                let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| {
                    BackendError::MalformedResponse(format!("cache entry {}: {e}", path.display()))
                })?;
                Ok(Some(entry.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(BackendError::Io {
                path: path.to_owned(),
                source,
            }),
        }
    }

    fn write_entry(&self, path: &Path, entry: &CacheEntry) -> Result<(), BackendError> {
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        let body = serde_json::to_vec_pretty(entry).expect("cache entry serialises");
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(&body).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
        drop(file);
        if path.exists() {
            // Another process recorded it first; keep theirs.
            let _ = fs::remove_file(&tmp);
            return Ok(());
        }
        fs::rename(&tmp, path).map_err(io_err(path))
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let key = cache_key(&self.model_name, request.prompt);
        let path = self.entry_path(&key);
        let lock = self.lock_for(&key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        if let Some(response) = self.read_entry(&path)? {
            return Ok(response);
        }
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| BackendError::CacheMiss(key.clone()))?;
        let response = inner.complete(request)?;
        self.write_entry(
            &path,
            &CacheEntry {
                model: self.model_name.clone(),
                prompt: request.prompt.to_owned(),
                response: response.clone(),
            },
        )?;
        // Re-read so a concurrent writer's entry wins consistently.
        Ok(self.read_entry(&path)?.unwrap_or(response))
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

// ---------------------------------------------------------------------------
// Concurrency limit

/// Counting semaphore that admits waiters in arrival order.
pub struct ConcurrencyLimiter {
    limit: usize,
    state: Mutex<LimiterState>,
    ready: Condvar,
}

#[derive(Default)]
struct LimiterState {
    in_flight: usize,
    next_ticket: u64,
    queue: VecDeque<u64>,
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            state: Mutex::new(LimiterState::default()),
            ready: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().expect("limiter poisoned");
        let ticket = state.next_ticket;
        state.next_ticket += 1;
        state.queue.push_back(ticket);
        while !(state.in_flight < self.limit && state.queue.front() == Some(&ticket)) {
            state = self.ready.wait(state).expect("limiter poisoned");
        }
        state.queue.pop_front();
        state.in_flight += 1;
        // The next waiter may also fit.
        self.ready.notify_all();
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter poisoned").in_flight
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter poisoned");
        state.in_flight -= 1;
        self.limiter.ready.notify_all();
    }
}

// ---------------------------------------------------------------------------
// HTTP

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: Option<ChatChoiceMessage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

/// Request body for `prompt` as a single user turn.
pub fn chat_request_body(config: &BackendConfig, prompt: &str) -> serde_json::Value {
    serde_json::to_value(ChatRequest {
        model: &config.model_name,
        messages: vec![ChatMessage {
            role: "user",
            content: prompt,
        }],
        temperature: config.temperature(),
        max_tokens: config.max_tokens,
    })
    .expect("chat request serialises")
}

/// First choice's message text.
pub fn parse_chat_response(body: &str) -> Result<String, BackendError> {
    let response: ChatResponse = serde_json::from_str(body)
        .map_err(|e| BackendError::MalformedResponse(format!("invalid json: {e}")))?;
    response
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message)
        .and_then(|m| m.content)
        .ok_or_else(|| BackendError::MalformedResponse("no choice text".into()))
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    limiter: ConcurrencyLimiter,
}

enum Attempt {
    Done(String),
    Retryable(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        if config.endpoint_url.is_empty() {
            return Err(BackendError::Config("http backend needs an endpoint url".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self {
            limiter: ConcurrencyLimiter::new(config.max_in_flight),
            config,
            client,
            api_key,
        })
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let mut request = self
            .client
            .post(&self.config.endpoint_url)
            .json(&chat_request_body(&self.config, prompt));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retryable(BackendError::Transport(e.to_string())),
        };
        let status = response.status();
        if status.as_u16() == 429 {
            return Attempt::Retryable(BackendError::RateLimited);
        }
        let body = match response.text() {
            Ok(b) => b,
            Err(e) => return Attempt::Retryable(BackendError::Transport(e.to_string())),
        };
        if status.is_server_error() {
            return Attempt::Retryable(BackendError::Transport(format!("HTTP {status}: {body}")));
        }
        if !status.is_success() {
            return Attempt::Fatal(BackendError::Transport(format!("HTTP {status}: {body}")));
        }
        match parse_chat_response(&body) {
            Ok(text) => Attempt::Done(text),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::Config("empty prompt".into()));
        }
        let _permit = self.limiter.acquire();
        let mut transport_failures = 0;
        let mut rate_limited = 0;
        loop {
            match self.attempt(request.prompt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retryable(BackendError::RateLimited) => {
                    if rate_limited >= self.config.backoff.max_attempts {
                        return Err(BackendError::Transport(format!(
                            "still rate limited after {rate_limited} backoff retries"
                        )));
                    }
                    let delay = self.config.backoff.delay(rate_limited);
                    log::warn!("rate limited, backing off for {delay:?}");
                    thread::sleep(delay);
                    rate_limited += 1;
                }
                Attempt::Retryable(e) => {
                    if transport_failures >= self.config.transport_retries {
                        return Err(e);
                    }
                    log::warn!("transport error, retrying: {e}");
                    transport_failures += 1;
                }
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.config.model_name
    }
}
