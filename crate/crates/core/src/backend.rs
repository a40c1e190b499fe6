//! Classification backends, response parsing, and the append-only run store.
//!
//! Every `classify` call is a single stateless request: no conversation
//! state is carried between calls. Live HTTP backends send exactly one user
//! message; the replay backend returns previously recorded text byte for byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::promptgen::PromptText;
use crate::vocab::normalize_label;

/// Name of a model/provider configuration, e.g. `chatgpt-3.5`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BackendId(String);

impl BackendId {
    pub fn new(name: impl Into<String>) -> Result<Self, BackendError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(BackendError::Config(
                "backend name must not be empty".into(),
            ));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `<NAME>_API_KEY`, upper-cased with dashes turned into underscores.
    pub fn credential_var(&self) -> String {
        format!("{}_API_KEY", self.0.to_uppercase().replace('-', "_"))
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifies one execution cell of a campaign. Ordering is
/// (backend, dataset, context, run).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub backend: BackendId,
    pub dataset_id: String,
    pub with_context: bool,
    pub run_index: u32,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/run {}",
            self.backend,
            self.dataset_id,
            if self.with_context {
                "context"
            } else {
                "no-context"
            },
            self.run_index
        )
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("prompt exceeds the provider's size limit: {0}")]
    Oversize(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("provider error (HTTP {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("unexpected provider response: {0}")]
    BadPayload(String),
    #[error("no recorded response for {0}")]
    NoRecordedResponse(CellKey),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("cannot read replay source {path}: {cause}")]
    ReplaySource { path: PathBuf, cause: String },
}

impl BackendError {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::RateLimited { .. }
        )
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &BackendId;

    /// One stateless request. Returns the raw completion text.
    fn classify(&self, cell: &CellKey, prompt: &PromptText) -> Result<String, BackendError>;

    /// Decoding parameters recorded alongside every response.
    fn decoding(&self) -> BTreeMap<String, Value> {
        BTreeMap::new()
    }

    /// Live backends stamp records with wall-clock time; replay does not.
    fn is_live(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Replay

#[derive(Deserialize)]
struct RecordedResponse {
    backend: String,
    dataset_id: String,
    run_index: u32,
    with_context: bool,
    raw_response: Option<String>,
}

/// Serves recorded responses keyed by (backend, dataset, run, context).
///
/// Accepts either a full run store or a minimal cassette with just those
/// fields plus `raw_response`, one JSON document per line.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    id: BackendId,
    responses: HashMap<(String, u32, bool), String>,
}

impl ReplayBackend {
    /// `source` selects which recorded backend to serve; defaults to `id`.
    pub fn from_jsonl(id: BackendId, source: Option<&str>, text: &str) -> Result<Self, String> {
        let source = source.unwrap_or(id.as_str()).to_string();
        let mut responses = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordedResponse =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if rec.backend != source {
                continue;
            }
            let Some(raw) = rec.raw_response else {
                continue;
            };
            let key = (rec.dataset_id, rec.run_index, rec.with_context);
            if responses.insert(key.clone(), raw).is_some() {
                return Err(format!(
                    "line {}: duplicate recording for {}/{}/{}",
                    i + 1,
                    key.0,
                    key.1,
                    key.2
                ));
            }
        }
        Ok(Self { id, responses })
    }

    pub fn load(id: BackendId, source: Option<&str>, path: &Path) -> Result<Self, BackendError> {
        let err = |cause: String| BackendError::ReplaySource {
            path: path.to_path_buf(),
            cause,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_jsonl(id, source, &text).map_err(err)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn classify(&self, cell: &CellKey, _prompt: &PromptText) -> Result<String, BackendError> {
        self.responses
            .get(&(cell.dataset_id.clone(), cell.run_index, cell.with_context))
            .cloned()
            .ok_or_else(|| BackendError::NoRecordedResponse(cell.clone()))
    }
}

// ---------------------------------------------------------------------------
// Live HTTP

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApiFlavor {
    /// `POST /v1/chat/completions`-style APIs.
    OpenaiChat,
    /// Google `generateContent`.
    Gemini,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Runs `call`, retrying transport and rate-limit failures with
    /// exponential backoff. Other errors return immediately.
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    thread::sleep(self.base_delay * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
                Err(BackendError::RateLimited { .. }) => {
                    return Err(BackendError::RateLimited {
                        attempts: attempt + 1,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Connection settings for one live backend.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub flavor: ApiFlavor,
    pub endpoint: String,
    pub model: Option<String>,
    pub parameters: Map<String, Value>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

pub struct HttpBackend {
    id: BackendId,
    flavor: ApiFlavor,
    endpoint: String,
    model: Option<String>,
    api_key: String,
    parameters: Map<String, Value>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("id", &self.id)
            .field("flavor", &self.flavor)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(id: BackendId, config: HttpConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .new_agent();
        Self {
            id,
            flavor: config.flavor,
            endpoint: config.endpoint,
            model: config.model,
            api_key: api_key.into(),
            parameters: config.parameters,
            retry: config.retry,
            agent,
        }
    }

    /// Reads the credential from `<NAME>_API_KEY`.
    pub fn api_key_from_env(id: &BackendId) -> Result<String, BackendError> {
        let var = id.credential_var();
        std::env::var(&var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(BackendError::MissingCredential(var))
    }

    /// JSON payload for one prompt: a single user turn, nothing else.
    pub fn request_body(&self, prompt: &PromptText) -> Value {
        match self.flavor {
            ApiFlavor::OpenaiChat => {
                let mut body = self.parameters.clone();
                if let Some(model) = &self.model {
                    body.insert("model".into(), Value::String(model.clone()));
                }
                body.insert(
                    "messages".into(),
                    serde_json::json!([{ "role": "user", "content": prompt.text }]),
                );
                Value::Object(body)
            }
            ApiFlavor::Gemini => {
                let mut body = Map::new();
                body.insert(
                    "contents".into(),
                    serde_json::json!([{ "role": "user", "parts": [{ "text": prompt.text }] }]),
                );
                if !self.parameters.is_empty() {
                    body.insert(
                        "generationConfig".into(),
                        Value::Object(self.parameters.clone()),
                    );
                }
                Value::Object(body)
            }
        }
    }

    fn send_once(&self, body: &Value) -> Result<String, BackendError> {
        let request = self.agent.post(&self.endpoint);
        let request = match self.flavor {
            ApiFlavor::OpenaiChat => {
                request.header("Authorization", &format!("Bearer {}", self.api_key))
            }
            ApiFlavor::Gemini => request.header("x-goog-api-key", &self.api_key),
        };
        let mut response = request
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if let Some(err) = classify_status(status, &text) {
            return Err(err);
        }
        let payload: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadPayload(format!("{e}: {}", truncate(&text))))?;
        extract_completion(self.flavor, &payload)
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn classify(&self, _cell: &CellKey, prompt: &PromptText) -> Result<String, BackendError> {
        let body = self.request_body(prompt);
        self.retry.run(|| self.send_once(&body))
    }

    fn decoding(&self) -> BTreeMap<String, Value> {
        let mut out: BTreeMap<String, Value> = self
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(model) = &self.model {
            out.insert("model".into(), Value::String(model.clone()));
        }
        out
    }

    fn is_live(&self) -> bool {
        true
    }
}

fn truncate(text: &str) -> String {
    text.chars().take(300).collect()
}

/// Maps a non-success HTTP status to a backend error.
pub fn classify_status(status: u16, body: &str) -> Option<BackendError> {
    if (200..300).contains(&status) {
        return None;
    }
    let lower = body.to_lowercase();
    let oversize_hint = [
        "context_length_exceeded",
        "maximum context length",
        "too long",
        "too large",
        "exceeds the maximum",
    ]
    .iter()
    .any(|hint| lower.contains(hint));
    Some(match status {
        401 | 403 => BackendError::Auth(truncate(body)),
        413 => BackendError::Oversize(truncate(body)),
        400 if oversize_hint => BackendError::Oversize(truncate(body)),
        429 => BackendError::RateLimited { attempts: 1 },
        500..=599 => BackendError::Transport(format!("HTTP {status}: {}", truncate(body))),
        _ => BackendError::Provider {
            status,
            body: truncate(body),
        },
    })
}

fn extract_completion(flavor: ApiFlavor, payload: &Value) -> Result<String, BackendError> {
    let missing = || BackendError::BadPayload(truncate(&payload.to_string()));
    match flavor {
        ApiFlavor::OpenaiChat => payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(missing),
        ApiFlavor::Gemini => {
            let parts = payload
                .pointer("/candidates/0/content/parts")
                .and_then(Value::as_array)
                .ok_or_else(missing)?;
            Ok(parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Response parsing

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response contains no parseable key/value object")]
pub struct ParseFailure;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    /// Response keys that matched no header.
    pub extra_keys: usize,
    /// Headers recovered only after normalization (e.g. re-cased by the model).
    pub normalized_matches: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub assignments: Vec<Option<String>>,
    pub diagnostics: ParseDiagnostics,
}

/// First JSON object in `raw`, skipping any prose or code fences around it.
fn first_object(raw: &str) -> Option<Map<String, Value>> {
    raw.char_indices()
        .filter(|&(_, c)| c == '{')
        .find_map(|(i, _)| {
            let mut values = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            match values.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
}

fn value_text(value: &Value) -> Option<String> {
    let text = match value {
        Value::Null => return None,
        Value::String(s) => s.trim().to_string(),
        other => other.to_string(),
    };
    (!text.is_empty()).then_some(text)
}

/// Pairs every header with the topic text the model returned for it.
///
/// Headers match keys by raw string first, then by normalized string.
/// Missing, null and empty values yield `None`.
pub fn parse_response(raw: &str, headers: &[String]) -> Result<ParsedResponse, ParseFailure> {
    let object = first_object(raw).ok_or(ParseFailure)?;
    let mut used: HashSet<&str> = HashSet::new();
    let mut assignments = vec![None; headers.len()];
    let mut pending = Vec::new();

    for (i, header) in headers.iter().enumerate() {
        match object.get_key_value(header.as_str()) {
            Some((key, value)) => {
                used.insert(key.as_str());
                assignments[i] = value_text(value);
            }
            None => pending.push(i),
        }
    }

    let mut normalized_matches = 0;
    for i in pending {
        let wanted = normalize_label(&headers[i]);
        let hit = object
            .iter()
            .find(|(k, _)| !used.contains(k.as_str()) && normalize_label(k) == wanted);
        if let Some((key, value)) = hit {
            used.insert(key.as_str());
            normalized_matches += 1;
            assignments[i] = value_text(value);
        }
    }

    Ok(ParsedResponse {
        assignments,
        diagnostics: ParseDiagnostics {
            extra_keys: object.len() - used.len(),
            normalized_matches,
        },
    })
}

// ---------------------------------------------------------------------------
// Run records and the store

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
    #[serde(default)]
    pub decoding: BTreeMap<String, Value>,
}

/// One execution of one dataset by one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub backend: BackendId,
    pub dataset_id: String,
    pub run_index: u32,
    pub with_context: bool,
    pub raw_response: String,
    pub assignments: Vec<Option<String>>,
    pub error: Option<String>,
    #[serde(default)]
    pub diagnostics: ParseDiagnostics,
    #[serde(default)]
    pub meta: RequestMeta,
}

impl RunRecord {
    /// Parses `raw` against `headers`. A parse failure yields a record with
    /// `error` set and every assignment absent.
    pub fn from_response(
        cell: &CellKey,
        raw: String,
        headers: &[String],
        meta: RequestMeta,
    ) -> Self {
        let (assignments, diagnostics, error) = match parse_response(&raw, headers) {
            Ok(parsed) => (parsed.assignments, parsed.diagnostics, None),
            Err(e) => (
                vec![None; headers.len()],
                ParseDiagnostics::default(),
                Some(e.to_string()),
            ),
        };
        Self {
            backend: cell.backend.clone(),
            dataset_id: cell.dataset_id.clone(),
            run_index: cell.run_index,
            with_context: cell.with_context,
            raw_response: raw,
            assignments,
            error,
            diagnostics,
            meta,
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            backend: self.backend.clone(),
            dataset_id: self.dataset_id.clone(),
            with_context: self.with_context,
            run_index: self.run_index,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }

    fn check(&self) -> Result<(), String> {
        if self.run_index < 1 {
            return Err("run_index must be at least 1".into());
        }
        if self.error.is_some() && self.assignments.iter().any(Option::is_some) {
            return Err("failed run carries assignments".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run store {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("run store {path}, line {line}: {cause}")]
    Malformed {
        path: PathBuf,
        line: usize,
        cause: String,
    },
    #[error("run store already holds a record for {0}")]
    Duplicate(CellKey),
    #[error("run store {0} is locked by another process (remove the .lock file if stale)")]
    Locked(PathBuf),
}

/// Parses line-delimited run records, sorted by (backend, dataset, context, run).
pub fn parse_runs(text: &str, path: &Path) -> Result<Vec<RunRecord>, StoreError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |cause: String| StoreError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            cause,
        };
        let record: RunRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        record.check().map_err(malformed)?;
        if !seen.insert(record.key()) {
            return Err(StoreError::Duplicate(record.key()));
        }
        records.push(record);
    }
    records.sort_by_key(RunRecord::key);
    Ok(records)
}

pub fn load_runs(path: &Path) -> Result<Vec<RunRecord>, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_runs(&text, path)
}

/// Appends one record to the store at `path`, creating it if needed.
pub fn record_run(path: &Path, record: &RunRecord) -> Result<(), StoreError> {
    RunStore::open(path)?.append(record)
}

struct StoreLock(PathBuf);

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Exclusive append handle on a run store file.
pub struct RunStore {
    path: PathBuf,
    writer: BufWriter<File>,
    keys: HashSet<CellKey>,
    _lock: StoreLock,
}

impl RunStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut lock_name = path.as_os_str().to_owned();
        lock_name.push(".lock");
        let lock_path = PathBuf::from(lock_name);
        match OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Locked(path.to_path_buf()))
            }
            Err(e) => return Err(io(e)),
        }
        let lock = StoreLock(lock_path);

        let keys = if path.exists() {
            load_runs(path)?.iter().map(RunRecord::key).collect()
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
            keys,
            _lock: lock,
        })
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), StoreError> {
        let key = record.key();
        if self.keys.contains(&key) {
            return Err(StoreError::Duplicate(key));
        }
        let line = serde_json::to_string(record).expect("run records always serialize");
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        writeln!(self.writer, "{line}").map_err(io)?;
        self.writer.flush().map_err(io)?;
        self.keys.insert(key);
        Ok(())
    }
}
