//! Model completions from a chat-completions endpoint or a replay store,
//! plus extraction of Dafny source from raw responses.

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_LLM_TIMEOUT: Duration = Duration::from_secs(180);
pub const TEMPERATURE_SWEEP: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];
pub const ENDPOINT_ENV: &str = "VFORGE_ENDPOINT";

const DAFNY_TOKENS: [&str; 6] = ["method", "function", "lemma", "datatype", "module", "predicate"];
/// Top-level keywords that may open or close a program without being
/// declarations of the kinds above.
const LEADING_KEYWORDS: [&str; 8] = ["include", "import", "class", "trait", "newtype", "const", "type", "ghost"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    pub timeout: Duration,
    pub max_tokens: Option<u32>,
}

impl GenerationRequest {
    pub fn new(model: impl Into<String>, temperature: f64, messages: Vec<ChatMessage>) -> Self {
        GenerationRequest { model: model.into(), temperature, messages, timeout: DEFAULT_LLM_TIMEOUT, max_tokens: None }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(GenerationError::InvalidRequest(format!("temperature {} outside [0, 1]", self.temperature)));
        }
        match self.messages.first() {
            None => Err(GenerationError::InvalidRequest("no messages".into())),
            Some(m) if m.role != "system" => {
                Err(GenerationError::InvalidRequest("first message must have role \"system\"".into()))
            }
            Some(_) => Ok(()),
        }
    }

    /// Stable hash of (model, temperature, full message list).
    pub fn key(&self) -> String {
        hash_key(&self.model, self.temperature, &self.messages)
    }

    /// Hash of (model, temperature, system and first user message); combined
    /// with [`GenerationRequest::round`] it addresses scripted replay entries.
    pub fn seed_key(&self) -> String {
        let n = self.messages.len().min(2);
        hash_key(&self.model, self.temperature, &self.messages[..n])
    }

    /// Number of assistant turns already in the conversation.
    pub fn round(&self) -> usize {
        self.messages.iter().filter(|m| m.role == "assistant").count()
    }
}

fn hash_key(model: &str, temperature: f64, messages: &[ChatMessage]) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model: &'a str,
        temperature: f64,
        messages: &'a [ChatMessage],
    }
    let json = serde_json::to_vec(&KeyMaterial { model, temperature, messages }).expect("key material serializes");
    let digest = Sha256::digest(&json);
    hex::encode(&digest[..16])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResponse {
    pub raw_text: String,
    pub latency: Duration,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("endpoint error (status {status:?}): {body}")]
    EndpointError { status: Option<u16>, body: String },
    #[error("no replay entry for request key {0}")]
    ReplayMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A source of completions. Implementations must tolerate concurrent calls.
pub trait Generator: Send + Sync {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, GenerationError>;
}

/// Read-only directory of recorded responses.
///
/// Lookup tries `<key>.txt` first, then the scripted form
/// `<seed-key>.r<round>.txt`, which lets multi-round fixtures be written
/// without knowing the verifier's exact feedback text in advance.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn exact_path(&self, req: &GenerationRequest) -> PathBuf {
        self.dir.join(format!("{}.txt", req.key()))
    }

    pub fn scripted_path(&self, req: &GenerationRequest) -> PathBuf {
        self.dir.join(format!("{}.r{}.txt", req.seed_key(), req.round()))
    }

    pub fn lookup(&self, req: &GenerationRequest) -> Option<String> {
        [self.exact_path(req), self.scripted_path(req)].iter().find_map(|p| std::fs::read_to_string(p).ok())
    }
}

impl Generator for ReplayStore {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
        req.validate()?;
        let start = Instant::now();
        let raw_text = self.lookup(req).ok_or_else(|| GenerationError::ReplayMiss(req.key()))?;
        Ok(GenerationResponse { raw_text, latency: start.elapsed(), backend: Backend::Replay })
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Client for `<base>/v1/chat/completions`.
pub struct LiveClient {
    base: String,
    client: reqwest::blocking::Client,
    slots: Slots,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Transient(GenerationError),
    Fatal(GenerationError),
}

impl LiveClient {
    /// `max_in_flight` bounds concurrent requests to this endpoint.
    pub fn new(base: impl Into<String>, max_in_flight: usize) -> Self {
        LiveClient {
            base: base.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::new(),
            slots: Slots { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() },
        }
    }

    pub fn url(&self) -> String {
        format!("{}/v1/chat/completions", self.base)
    }

    fn attempt(&self, req: &GenerationRequest) -> Attempt {
        let body = ChatBody {
            model: &req.model,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let resp = match self.client.post(self.url()).timeout(req.timeout).json(&body).send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Fatal(GenerationError::Timeout(req.timeout)),
            Err(e) => {
                return Attempt::Transient(GenerationError::EndpointError { status: None, body: e.to_string() })
            }
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Fatal(GenerationError::Timeout(req.timeout)),
            Err(e) => {
                return Attempt::Transient(GenerationError::EndpointError {
                    status: Some(status.as_u16()),
                    body: e.to_string(),
                })
            }
        };
        if status.is_server_error() {
            return Attempt::Transient(GenerationError::EndpointError { status: Some(status.as_u16()), body: text });
        }
        if !status.is_success() {
            return Attempt::Fatal(GenerationError::EndpointError { status: Some(status.as_u16()), body: text });
        }
        match serde_json::from_str::<ChatReply>(&text) {
            Ok(reply) => match reply.choices.into_iter().next() {
                Some(choice) => Attempt::Done(choice.message.content.unwrap_or_default()),
                None => Attempt::Fatal(GenerationError::EndpointError {
                    status: Some(status.as_u16()),
                    body: "response has no choices".into(),
                }),
            },
            Err(e) => Attempt::Fatal(GenerationError::EndpointError {
                status: Some(status.as_u16()),
                body: format!("unparseable response ({e}): {text}"),
            }),
        }
    }
}

impl Generator for LiveClient {
    /// One retry on 5xx or connection failure; none on timeout.
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
        req.validate()?;
        let _slot = self.slots.acquire();
        let start = Instant::now();
        let mut outcome = self.attempt(req);
        if matches!(outcome, Attempt::Transient(_)) {
            outcome = self.attempt(req);
        }
        match outcome {
            Attempt::Done(raw_text) => Ok(GenerationResponse { raw_text, latency: start.elapsed(), backend: Backend::Live }),
            Attempt::Transient(e) | Attempt::Fatal(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no Dafny code found in response")]
pub struct ExtractionFailure;

fn has_dafny_token(line: &str) -> bool {
    line.split(|c: char| !(c.is_alphanumeric() || c == '_')).any(|w| DAFNY_TOKENS.contains(&w))
}

fn is_code_line(line: &str) -> bool {
    let starts_with_keyword = line.split_whitespace().next().is_some_and(|w| LEADING_KEYWORDS.contains(&w));
    has_dafny_token(line) || starts_with_keyword || line.contains('{') || line.contains('}')
}

fn fence_tag(line: &str) -> Option<&str> {
    line.trim_start().strip_prefix("```").map(str::trim)
}

/// Pulls Dafny source out of a model response.
///
/// Fenced blocks tagged `dafny` or untagged are concatenated in order. Either
/// way, leading and trailing lines are dropped until the first and last line
/// holding a Dafny keyword or a brace. The result is a subsequence of the
/// input's lines.
pub fn extract_code(raw_text: &str) -> Result<String, ExtractionFailure> {
    let lines: Vec<&str> = raw_text.lines().collect();
    let fenced = lines.iter().any(|l| fence_tag(l).is_some());

    let selected: Vec<&str> = if fenced {
        let mut out = Vec::new();
        let mut inside: Option<bool> = None;
        for line in &lines {
            match (inside, fence_tag(line)) {
                (None, Some(tag)) => inside = Some(tag.is_empty() || tag.eq_ignore_ascii_case("dafny")),
                (Some(_), Some(_)) => inside = None,
                (Some(true), None) => out.push(*line),
                _ => {}
            }
        }
        out
    } else {
        lines
    };

    let first = selected.iter().position(|l| is_code_line(l));
    let last = selected.iter().rposition(|l| is_code_line(l));
    let code = match (first, last) {
        (Some(a), Some(b)) => selected[a..=b].join("\n"),
        _ => String::new(),
    };
    if code.trim().is_empty() || !code.lines().any(has_dafny_token) {
        return Err(ExtractionFailure);
    }
    Ok(code)
}
