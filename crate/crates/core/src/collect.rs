//! Prediction collection from OpenAI-compatible chat-completions endpoints.
//!
//! Every raw response is stored in a content-addressed cache before it is
//! parsed, so reruns over a warm cache make no network calls.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{parse_label_text, softmax_labels, LabelLogprobs};
use crate::ingest::{self, BenchmarkSet, Pitch, PredictionKind, PredictionRecord, RunRecord};
use crate::rng::substream;
use crate::tiers::Tier;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("pitch {pitch_id}: no candidate token matches a tier label")]
    NoLabelTokens { pitch_id: String },
    #[error("malformed response: {0}")]
    Schema(String),
    #[error("pitch {pitch_id}: samples {missing:?} could not be collected")]
    PartialCollection { pitch_id: String, missing: Vec<usize>, texts: Vec<Option<String>> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
}

impl CollectError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CollectError + '_ {
        move |source| CollectError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, CollectError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; unset means no auth header.
    pub auth_env_var: String,
    pub max_concurrent: usize,
    /// Zero disables rate limiting.
    pub requests_per_minute: u32,
    pub retry_max: u32,
    pub timeout_seconds: f64,
    pub backoff_base_ms: u64,
    pub top_logprobs: u32,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_name: String::new(),
            auth_env_var: "OPENAI_API_KEY".into(),
            max_concurrent: 4,
            requests_per_minute: 60,
            retry_max: 4,
            timeout_seconds: 60.0,
            backoff_base_ms: 500,
            top_logprobs: 20,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent == 0 {
            return Err(CollectError::Config("max_concurrent must be at least 1".into()));
        }
        if self.model_name.is_empty() {
            return Err(CollectError::Config("model_name is required".into()));
        }
        if !(self.timeout_seconds.is_finite() && self.timeout_seconds > 0.0) {
            return Err(CollectError::Config("timeout_seconds must be positive".into()));
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Identifies the work a request belongs to. Not sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTag {
    pub pitch_id: String,
    pub sample: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub url: String,
    pub bearer: Option<String>,
    pub body: Value,
    pub timeout: Duration,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    /// Timeouts, connection errors, 429 and 5xx.
    Retryable(String),
    Auth(String),
    Fatal(String),
}

pub trait Transport: Send + Sync {
    /// Sends one request and returns the raw response body.
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, TransportFailure>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| CollectError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, TransportFailure> {
        let mut rb = self.client.post(&request.url).timeout(request.timeout).json(&request.body);
        if let Some(token) = &request.bearer {
            rb = rb.bearer_auth(token);
        }
        let resp = rb.send().map_err(|e| TransportFailure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportFailure::Retryable(e.to_string()))?;
        match status.as_u16() {
            200..=299 => Ok(text),
            401 | 403 => Err(TransportFailure::Auth(format!("{status}: {text}"))),
            408 | 429 | 500..=599 => Err(TransportFailure::Retryable(format!("{status}: {text}"))),
            _ => Err(TransportFailure::Fatal(format!("{status}: {text}"))),
        }
    }
}

type Responder = dyn Fn(&ChatRequest, usize) -> std::result::Result<String, TransportFailure> + Send + Sync;

#[derive(Debug, Clone)]
pub struct MockCall {
    pub start: Instant,
    pub end: Instant,
    pub tag: RequestTag,
    pub body: Value,
}

/// Offline transport driven by a closure. The closure also gets the global
/// call number. Every call is logged with timestamps.
pub struct MockTransport {
    responder: Box<Responder>,
    latency: Duration,
    calls: Mutex<Vec<MockCall>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    counter: AtomicUsize,
}

impl MockTransport {
    pub fn new<F>(responder: F) -> Self
    where
        F: Fn(&ChatRequest, usize) -> std::result::Result<String, TransportFailure> + Send + Sync + 'static,
    {
        Self {
            responder: Box::new(responder),
            latency: Duration::ZERO,
            calls: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            counter: AtomicUsize::new(0),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Answers logprob requests with `tokens` and text requests with a label
    /// derived from the pitch id and sample index.
    pub fn scripted(tokens: Vec<(String, f64)>) -> Self {
        Self::new(move |req, _| {
            if req.body.get("logprobs").and_then(Value::as_bool) == Some(true) {
                let pairs: Vec<(&str, f64)> = tokens.iter().map(|(t, l)| (t.as_str(), *l)).collect();
                Ok(mock_logprob_response(&pairs))
            } else {
                let h = req.tag.pitch_id.bytes().map(usize::from).sum::<usize>() + req.tag.sample.unwrap_or(0);
                Ok(mock_text_response(Tier::from_index(h % 4).name()))
            }
        })
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().expect("mock log poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, TransportFailure> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let start = Instant::now();
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let out = (self.responder)(request, n);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.calls.lock().expect("mock log poisoned").push(MockCall {
            start,
            end: Instant::now(),
            tag: request.tag.clone(),
            body: request.body.clone(),
        });
        out
    }
}

pub fn mock_logprob_response(tokens: &[(&str, f64)]) -> String {
    let top: Vec<Value> = tokens.iter().map(|(t, l)| json!({"token": t, "logprob": l})).collect();
    let first = tokens.first().map(|(t, l)| json!({"token": t, "logprob": l, "top_logprobs": top}));
    json!({
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": tokens.first().map_or("", |t| t.0)},
            "logprobs": {"content": first.into_iter().collect::<Vec<_>>()},
        }],
    })
    .to_string()
}

pub fn mock_text_response(text: &str) -> String {
    json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
    })
    .to_string()
}

/// Spaces request starts at least `60 / rpm` seconds apart.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(rpm: u32) -> Self {
        let interval = if rpm == 0 { Duration::ZERO } else { Duration::from_secs_f64(60.0 / f64::from(rpm)) };
        Self { interval, next: Mutex::new(None) }
    }

    /// Blocks until the next slot. The lock is held while sleeping, so slots
    /// are measured from when callers actually proceed.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let mut next = self.next.lock().expect("rate limiter poisoned");
        if let Some(due) = *next {
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        *next = Some(Instant::now() + self.interval);
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("semaphore poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("semaphore poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("semaphore poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

/// Delay before retry `attempt` (0-based): base * 2^attempt, scaled by a jitter
/// factor in [0.5, 1) drawn from a stream keyed on the request.
pub fn backoff_delay(base_ms: u64, attempt: u32, jitter_key: u64) -> Duration {
    let factor = 0.5 + 0.5 * substream(jitter_key, u64::from(attempt)).random::<f64>();
    let ms = base_ms as f64 * 2f64.powi(attempt.min(16) as i32) * factor;
    Duration::from_secs_f64(ms / 1000.0)
}

/// Content-addressed store of raw responses. The first write for a key wins.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(CollectError::io(dir))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn key(endpoint: &EndpointConfig, prompt: &str, pitch_text: &str, params: &Value, sample: Option<usize>) -> String {
        let material = json!([endpoint.base_url, endpoint.model_name, prompt, pitch_text, params, sample]);
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CollectError::Io { path, source: e }),
        }
    }

    /// Atomic write; returns false when the key was already present.
    pub fn put(&self, key: &str, payload: &str) -> Result<bool> {
        let path = self.path(key);
        if path.exists() {
            return Ok(false);
        }
        let parent = path.parent().expect("cache paths have a parent");
        fs::create_dir_all(parent).map_err(CollectError::io(parent))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(CollectError::io(parent))?;
        tmp.write_all(payload.as_bytes()).map_err(CollectError::io(&path))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(true),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(CollectError::Io { path, source: e.error }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub network_calls: usize,
    pub cache_hits: usize,
    pub cache_writes: usize,
}

/// Endpoint, transport and cache, plus the concurrency and rate bounds.
pub struct Client<'t> {
    pub endpoint: EndpointConfig,
    transport: &'t dyn Transport,
    cache: Cache,
    limiter: RateLimiter,
    slots: Semaphore,
    network_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    cache_writes: AtomicUsize,
}

impl<'t> Client<'t> {
    pub fn new(endpoint: EndpointConfig, transport: &'t dyn Transport, cache: Cache) -> Result<Self> {
        endpoint.validate()?;
        Ok(Self {
            limiter: RateLimiter::per_minute(endpoint.requests_per_minute),
            slots: Semaphore::new(endpoint.max_concurrent),
            endpoint,
            transport,
            cache,
            network_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            cache_writes: AtomicUsize::new(0),
        })
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            network_calls: self.network_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            cache_writes: self.cache_writes.load(Ordering::SeqCst),
        }
    }

    /// Cached payload for `key`, or a fresh one fetched with retries.
    fn fetch(&self, key: &str, body: Value, tag: RequestTag) -> Result<String> {
        if let Some(hit) = self.cache.get(key)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let request = ChatRequest {
            url: self.endpoint.url(),
            bearer: std::env::var(&self.endpoint.auth_env_var).ok().filter(|s| !s.is_empty()),
            body,
            timeout: Duration::from_secs_f64(self.endpoint.timeout_seconds),
            tag,
        };
        let jitter_key = u64::from_str_radix(&key[..16], 16).unwrap_or(0);
        let mut attempt = 0;
        let payload = loop {
            let result = self.slots.run(|| {
                self.limiter.acquire();
                self.network_calls.fetch_add(1, Ordering::SeqCst);
                self.transport.send(&request)
            });
            match result {
                Ok(p) => break p,
                Err(TransportFailure::Auth(m)) => return Err(CollectError::Auth(m)),
                Err(TransportFailure::Fatal(m)) => return Err(CollectError::Rejected(m)),
                Err(TransportFailure::Retryable(m)) => {
                    if attempt >= self.endpoint.retry_max {
                        return Err(CollectError::Transport(m));
                    }
                    log::warn!("retrying {}: {m}", request.tag.pitch_id);
                    std::thread::sleep(backoff_delay(self.endpoint.backoff_base_ms, attempt, jitter_key));
                    attempt += 1;
                }
            }
        };
        if self.cache.put(key, &payload)? {
            self.cache_writes.fetch_add(1, Ordering::SeqCst);
        }
        // a concurrent writer may have won; the stored payload is authoritative
        Ok(self.cache.get(key)?.unwrap_or(payload))
    }
}

fn messages(prompt: &str, pitch_text: &str) -> Value {
    json!([
        {"role": "system", "content": prompt},
        {"role": "user", "content": pitch_text},
    ])
}

/// Tier named by a candidate token: the unique tier whose name starts with the
/// token, or that the token starts with. Case and surrounding whitespace or
/// punctuation are ignored.
pub fn match_label_token(token: &str) -> Option<Tier> {
    let t: String = token
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if t.is_empty() {
        return None;
    }
    let mut hits = Tier::ALL.iter().filter(|tier| tier.name().starts_with(&t) || t.starts_with(tier.name()));
    match (hits.next(), hits.next()) {
        (Some(&tier), None) => Some(tier),
        _ => None,
    }
}

/// Tier log-probabilities from the first generated position's top candidates.
/// When several tokens map to one tier the largest log-probability is kept.
pub fn parse_logprob_response(payload: &str) -> Result<LabelLogprobs> {
    let v: Value = serde_json::from_str(payload).map_err(|e| CollectError::Schema(e.to_string()))?;
    let top = v
        .pointer("/choices/0/logprobs/content/0/top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| CollectError::Schema("no top_logprobs at the first position".into()))?;
    let mut out = LabelLogprobs::new();
    for cand in top {
        let (Some(token), Some(lp)) = (cand.get("token").and_then(Value::as_str), cand.get("logprob").and_then(Value::as_f64))
        else {
            return Err(CollectError::Schema("candidate without token or logprob".into()));
        };
        if let Some(tier) = match_label_token(token) {
            let e = out.entry(tier).or_insert(f64::NEG_INFINITY);
            *e = e.max(lp);
        }
    }
    Ok(out)
}

pub fn parse_text_response(payload: &str) -> Result<String> {
    let v: Value = serde_json::from_str(payload).map_err(|e| CollectError::Schema(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| CollectError::Schema("no message content".into()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    #[default]
    Full,
    Short,
}

impl TextField {
    pub fn of(self, pitch: &Pitch) -> &str {
        match self {
            TextField::Full => &pitch.text_full,
            TextField::Short => pitch.text_short.as_deref().unwrap_or(&pitch.text_full),
        }
    }
}

fn logprob_body(endpoint: &EndpointConfig, prompt: &str, text: &str) -> (Value, Value) {
    let params = json!({"max_tokens": 1, "temperature": 0, "logprobs": true, "top_logprobs": endpoint.top_logprobs});
    let mut body = params.clone();
    body["model"] = json!(endpoint.model_name);
    body["messages"] = messages(prompt, text);
    (body, params)
}

pub fn fetch_logprobs(client: &Client, prompt: &str, pitch: &Pitch, field: TextField) -> Result<LabelLogprobs> {
    let text = field.of(pitch);
    let (body, params) = logprob_body(&client.endpoint, prompt, text);
    let key = Cache::key(&client.endpoint, prompt, text, &params, None);
    let payload = client.fetch(&key, body, RequestTag { pitch_id: pitch.id.clone(), sample: None })?;
    let map = parse_logprob_response(&payload)?;
    if map.is_empty() {
        return Err(CollectError::NoLabelTokens { pitch_id: pitch.id.clone() });
    }
    Ok(map)
}

/// Runs `f(0..n)` on up to `workers` threads; results come back in index order.
fn run_bounded<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                *slots[i].lock().expect("worker slot poisoned") = Some(f(i));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("worker slot poisoned").expect("every job ran")).collect()
}

/// `n` independently requested completions; sample `i` has its own cache key.
pub fn fetch_samples(
    client: &Client,
    prompt: &str,
    pitch: &Pitch,
    field: TextField,
    n: usize,
    sampling_params: &Map<String, Value>,
) -> Result<Vec<String>> {
    if n == 0 {
        return Err(CollectError::Config("sample count must be at least 1".into()));
    }
    let text = field.of(pitch);
    let params = Value::Object(sampling_params.clone());
    let results = run_bounded(n, client.endpoint.max_concurrent, |i| {
        let mut body = params.clone();
        body["model"] = json!(client.endpoint.model_name);
        body["messages"] = messages(prompt, text);
        let key = Cache::key(&client.endpoint, prompt, text, &params, Some(i));
        client
            .fetch(&key, body, RequestTag { pitch_id: pitch.id.clone(), sample: Some(i) })
            .and_then(|p| parse_text_response(&p))
    });
    if let Some(Err(e)) = results.iter().find(|r| matches!(r, Err(CollectError::Auth(_)))) {
        return Err(CollectError::Auth(e.to_string()));
    }
    let missing: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.is_err()).map(|(i, _)| i).collect();
    let texts: Vec<Option<String>> = results.into_iter().map(|r| r.ok()).collect();
    if missing.is_empty() {
        Ok(texts.into_iter().flatten().collect())
    } else {
        Err(CollectError::PartialCollection { pitch_id: pitch.id.clone(), missing, texts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectMode {
    Logprob,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectOptions {
    pub mode: CollectMode,
    pub samples: usize,
    /// Request fields for sampled mode; empty means endpoint defaults.
    pub sampling_params: Map<String, Value>,
    pub text_field: TextField,
    /// Defaults to the model name.
    pub evaluator_id: Option<String>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            mode: CollectMode::Logprob,
            samples: 8,
            sampling_params: Map::new(),
            text_field: TextField::Full,
            evaluator_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitchFailure {
    pub pitch_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub records: usize,
    pub resumed: usize,
    pub failures: Vec<PitchFailure>,
    pub stats: ClientStats,
    pub output: PathBuf,
    pub header: Value,
}

pub fn journal_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".journal");
    PathBuf::from(s)
}

pub fn failures_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".failures.json");
    PathBuf::from(s)
}

fn collect_one(client: &Client, prompt: &str, pitch: &Pitch, opts: &CollectOptions, evaluator: &str) -> Result<PredictionRecord> {
    let mut rec = PredictionRecord {
        evaluator_id: evaluator.to_string(),
        pitch_id: pitch.id.clone(),
        kind: PredictionKind::Logprob,
        distribution: None,
        runs: None,
        label: None,
        confidence: None,
    };
    match opts.mode {
        CollectMode::Logprob => {
            let lp = fetch_logprobs(client, prompt, pitch, opts.text_field)?;
            rec.distribution = Some(softmax_labels(&lp).map_err(|e| CollectError::Schema(e.to_string()))?);
        }
        CollectMode::Sampled => {
            let texts = fetch_samples(client, prompt, pitch, opts.text_field, opts.samples, &opts.sampling_params)?;
            rec.kind = PredictionKind::Sampled;
            rec.runs = Some(
                texts
                    .into_iter()
                    .map(|t| RunRecord { parsed: parse_label_text(&t).tier(), raw_text: t })
                    .collect(),
            );
        }
    }
    Ok(rec)
}

fn journal_records(path: &Path, run_digest: &str) -> Result<BTreeMap<String, PredictionRecord>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(BTreeMap::new());
    };
    let first: Option<Value> = text.lines().next().and_then(|l| serde_json::from_str(l).ok());
    let same_run = first
        .as_ref()
        .and_then(|v| v.pointer("/_header/run_digest"))
        .and_then(Value::as_str)
        == Some(run_digest);
    if !same_run || text.lines().count() < 2 {
        return Ok(BTreeMap::new());
    }
    let recs = ingest::load_predictions(path)?;
    Ok(recs.into_iter().map(|r| (r.pitch_id.clone(), r)).collect())
}

/// Collects one record per pitch into `out`, preceded by a `_header` line.
/// Completed pitches are journaled so an interrupted run resumes where it
/// stopped; per-pitch failures go to a failure manifest next to `out`.
pub fn collect_benchmark(
    client: &Client,
    prompt_asset: &Path,
    benchmark: &BenchmarkSet,
    opts: &CollectOptions,
    out: &Path,
) -> Result<CollectSummary> {
    let prompt = fs::read_to_string(prompt_asset).map_err(CollectError::io(prompt_asset))?;
    let evaluator = opts.evaluator_id.clone().unwrap_or_else(|| client.endpoint.model_name.clone());
    let mut header = json!({
        "benchmark": benchmark.id,
        "evaluator_id": evaluator,
        "base_url": client.endpoint.base_url,
        "model_name": client.endpoint.model_name,
        "prompt_asset": prompt_asset.file_name().map(|n| n.to_string_lossy().into_owned()),
        "prompt_sha256": hex::encode(Sha256::digest(prompt.as_bytes())),
        "mode": opts.mode,
        "text_field": opts.text_field,
    });
    match opts.mode {
        CollectMode::Logprob => header["request_params"] = logprob_body(&client.endpoint, "", "").1,
        CollectMode::Sampled => {
            header["samples"] = json!(opts.samples);
            header["sampling_params"] = Value::Object(opts.sampling_params.clone());
        }
    }
    let digest = hex::encode(Sha256::digest(header.to_string().as_bytes()));
    header["run_digest"] = json!(digest);

    let jpath = journal_path(out);
    let done = journal_records(&jpath, &digest)?;
    if done.is_empty() {
        let line = json!({"_header": header}).to_string();
        fs::write(&jpath, format!("{line}\n")).map_err(CollectError::io(&jpath))?;
    }
    let journal = Mutex::new(OpenOptions::new().append(true).open(&jpath).map_err(CollectError::io(&jpath))?);

    let todo: Vec<&Pitch> = benchmark.pitches.iter().filter(|p| !done.contains_key(&p.id)).collect();
    let fresh = run_bounded(todo.len(), client.endpoint.max_concurrent, |i| {
        let rec = collect_one(client, &prompt, todo[i], opts, &evaluator)?;
        let line = serde_json::to_string(&rec).expect("records serialise");
        writeln!(journal.lock().expect("journal poisoned"), "{line}").map_err(CollectError::io(&jpath))?;
        Ok::<_, CollectError>(rec)
    });

    let mut records: BTreeMap<String, PredictionRecord> = done;
    let resumed = records.len();
    let mut failures = Vec::new();
    for (pitch, r) in todo.iter().zip(fresh) {
        match r {
            Ok(rec) => {
                records.insert(pitch.id.clone(), rec);
            }
            Err(e @ (CollectError::Io { .. } | CollectError::Auth(_))) => return Err(e),
            Err(e) => failures.push(PitchFailure { pitch_id: pitch.id.clone(), error: e.to_string() }),
        }
    }

    let ordered: Vec<&PredictionRecord> = benchmark.pitches.iter().filter_map(|p| records.get(&p.id)).collect();
    let mut text = json!({"_header": header}).to_string();
    text.push('\n');
    for r in &ordered {
        text.push_str(&serde_json::to_string(r).expect("records serialise"));
        text.push('\n');
    }
    fs::write(out, text).map_err(CollectError::io(out))?;
    let fpath = failures_path(out);
    if failures.is_empty() {
        let _ = fs::remove_file(&fpath);
    } else {
        let body = serde_json::to_string_pretty(&failures).expect("failures serialise");
        fs::write(&fpath, body).map_err(CollectError::io(&fpath))?;
    }
    let failed: BTreeSet<&str> = failures.iter().map(|f| f.pitch_id.as_str()).collect();
    log::info!("collected {} records, {} failed", ordered.len(), failed.len());
    Ok(CollectSummary { records: ordered.len(), resumed, failures, stats: client.stats(), output: out.to_path_buf(), header })
}
