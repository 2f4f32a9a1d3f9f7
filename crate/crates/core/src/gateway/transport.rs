//! Completion transports and the record/replay transcript cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Template name, template version and problem id, e.g.
    /// `code@1:toy-next`.
    pub prompt_id: String,
    pub model: String,
    pub temperature: f64,
    /// Sample index within the request batch.
    pub index: u32,
    /// Resample attempt for the same index.
    pub attempt: u32,
    pub prompt: String,
}

impl CompletionRequest {
    /// Hex sha256 over the prompt id, sampling parameters and index.
    pub fn key(&self) -> String {
        let material = serde_json::json!({
            "prompt_id": self.prompt_id,
            "model": self.model,
            "temperature": format!("{}", self.temperature),
            "index": self.index,
            "attempt": self.attempt,
        });
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }
}

pub trait Transport: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

/// Chat completions against an OpenAI-compatible endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    retries: u32,
}

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

impl HttpTransport {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(HttpTransport { client, base_url: base_url.into(), api_key: api_key.into(), retries: 3 })
    }

    /// Reads `TRI_API_KEY` and, optionally, `TRI_API_BASE`.
    pub fn from_env(timeout: Duration) -> Result<Self, GatewayError> {
        let key = std::env::var("TRI_API_KEY").map_err(|_| GatewayError::MissingApiKey)?;
        let base = std::env::var("TRI_API_BASE").unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        HttpTransport::new(base, key, timeout)
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<String, String> {
        let body = serde_json::json!({
            "model": req.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url.trim_end_matches('/')))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let json: serde_json::Value = resp.json().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("status {status}: {json}"));
        }
        json.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| format!("no completion content in {json}"))
    }
}

impl Transport for HttpTransport {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let mut last = String::new();
        for attempt in 0..self.retries {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("{}: attempt {} failed: {e}", req.prompt_id, attempt + 1);
                    last = e;
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                }
            }
        }
        Err(GatewayError::Transport { attempts: self.retries, message: last })
    }
}

/// Counts calls reaching the wrapped transport.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

/// Answers from a function of the request; used for tests and for
/// authoring bundled transcripts.
pub struct ScriptedTransport<F>(pub F);

impl<F> Transport for ScriptedTransport<F>
where
    F: Fn(&CompletionRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        (self.0)(req)
    }
}

/// A transport that must never be reached.
pub struct Offline;

impl Transport for Offline {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        Err(GatewayError::Offline(req.prompt_id.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub prompt_id: String,
    pub model: String,
    pub temperature: f64,
    pub index: u32,
    pub attempt: u32,
    pub request: String,
    pub response: String,
    pub timestamp: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheMode {
    /// Serve only from transcripts; a miss is an error.
    Replay,
    /// Serve hits from transcripts and record misses from the inner
    /// transport.
    Record,
    /// Always call the inner transport; nothing is stored.
    Live,
}

/// Transcripts live one per file at `<dir>/<key>.json`.
pub struct TranscriptCache<T> {
    dir: Option<PathBuf>,
    mode: CacheMode,
    inner: T,
    clock: fn() -> String,
    write_lock: Mutex<()>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl<T: Transport> TranscriptCache<T> {
    pub fn replay(dir: impl Into<PathBuf>, inner: T) -> Self {
        Self::with_mode(Some(dir.into()), CacheMode::Replay, inner)
    }

    pub fn record(dir: impl Into<PathBuf>, inner: T) -> Self {
        Self::with_mode(Some(dir.into()), CacheMode::Record, inner)
    }

    pub fn live(inner: T) -> Self {
        Self::with_mode(None, CacheMode::Live, inner)
    }

    fn with_mode(dir: Option<PathBuf>, mode: CacheMode, inner: T) -> Self {
        TranscriptCache { dir, mode, inner, clock: now, write_lock: Mutex::new(()) }
    }

    /// Replaces the timestamp source of recorded transcripts.
    pub fn with_clock(mut self, clock: fn() -> String) -> Self {
        self.clock = clock;
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn path_for(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("{key}.json"))
    }

    fn load(&self, dir: &Path, key: &str) -> Result<Option<Transcript>, GatewayError> {
        let path = Self::path_for(dir, key);
        match fs::read_to_string(&path) {
            Ok(text) => {
                serde_json::from_str(&text).map(Some).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GatewayError::Io(format!("{}: {e}", path.display()))),
        }
    }

    fn store(&self, dir: &Path, t: &Transcript) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().expect("transcript lock");
        fs::create_dir_all(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        let path = Self::path_for(dir, &t.key);
        let text = serde_json::to_string_pretty(t).expect("transcripts serialize") + "\n";
        fs::write(&path, text).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))
    }
}

impl<T: Transport> Transport for TranscriptCache<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let key = req.key();
        let Some(dir) = self.dir.as_deref() else {
            return self.inner.complete(req);
        };
        if let Some(t) = self.load(dir, &key)? {
            return Ok(t.response);
        }
        if self.mode == CacheMode::Replay {
            return Err(GatewayError::ReplayMiss { key, prompt_id: req.prompt_id.clone() });
        }
        let response = self.inner.complete(req)?;
        self.store(
            dir,
            &Transcript {
                key,
                prompt_id: req.prompt_id.clone(),
                model: req.model.clone(),
                temperature: req.temperature,
                index: req.index,
                attempt: req.attempt,
                request: req.prompt.clone(),
                response: response.clone(),
                timestamp: (self.clock)(),
            },
        )?;
        Ok(response)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

/// Builds an HTTP transport from the environment on first use, so runs
/// that never reach the provider need no API key.
pub struct LazyHttp {
    timeout: Duration,
    cell: std::sync::OnceLock<Result<HttpTransport, GatewayError>>,
}

impl LazyHttp {
    pub fn new(timeout: Duration) -> Self {
        LazyHttp { timeout, cell: std::sync::OnceLock::new() }
    }
}

impl Transport for LazyHttp {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        match self.cell.get_or_init(|| HttpTransport::from_env(self.timeout)) {
            Ok(t) => t.complete(req),
            Err(e) => Err(e.clone()),
        }
    }
}
