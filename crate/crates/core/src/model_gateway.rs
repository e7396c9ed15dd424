//! Chat-completion gateway: one `complete(session) -> reply` contract with a
//! remote HTTP implementation, a deterministic scripted model, a retry wrapper
//! and a record/replay layer keyed by a canonical session hash.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable holding the bearer token for remote endpoints.
pub const API_KEY_ENV: &str = "AUTORECIPE_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("no scripted reply for session {0}")]
    ScriptMiss(String),
    #[error("no recorded reply for session {0}")]
    ReplayMiss(String),
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error("session store: {0}")]
    Store(String),
}

impl GatewayError {
    /// Failures worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

/// Anything that can answer a chat session.
pub trait ChatModel: Send + Sync {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError>;
}

impl<M: ChatModel + ?Sized> ChatModel for &M {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        (**self).complete(session)
    }
}

impl<M: ChatModel + ?Sized> ChatModel for Box<M> {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        (**self).complete(session)
    }
}

/// Checks the structural contract every gateway relies on.
pub fn validate_session(session: &[ChatMessage]) -> Result<(), GatewayError> {
    match session.last() {
        None => return Err(GatewayError::InvalidSession("session is empty".into())),
        Some(m) if m.role != ChatRole::User => {
            return Err(GatewayError::InvalidSession("session must end with a user message".into()))
        }
        _ => {}
    }
    for (i, m) in session.iter().enumerate() {
        if m.role != ChatRole::System && m.content.trim().is_empty() {
            if i + 1 == session.len() {
                return Err(GatewayError::EmptyPrompt);
            }
            return Err(GatewayError::InvalidSession(format!("message {i} ({}) is empty", m.role.as_str())));
        }
    }
    Ok(())
}

/// Normalizes line endings and strips trailing whitespace on every line.
pub fn canonicalize(text: &str) -> String {
    text.replace("\r\n", "\n")
        .replace('\r', "\n")
        .split('\n')
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
}

/// SHA-256 over the canonicalized roles and contents, hex encoded.
pub fn session_hash(session: &[ChatMessage]) -> String {
    let mut hasher = Sha256::new();
    for m in session {
        hasher.update(m.role.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(canonicalize(&m.content).as_bytes());
        hasher.update([0x1e]);
    }
    hex::encode(hasher.finalize())
}

type Responder = Box<dyn Fn(&[ChatMessage]) -> Option<String> + Send + Sync>;

enum Script {
    Sequence(Mutex<VecDeque<String>>),
    Keyed(HashMap<String, String>),
    Responder(Responder),
}

/// Deterministic model for tests and fixtures. Strict by default: a session the
/// script cannot answer is `ScriptMiss`, never a silent default.
pub struct ScriptedModel {
    script: Script,
    fallback: Option<String>,
    calls: AtomicUsize,
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    replies: Vec<String>,
}

impl ScriptedModel {
    /// Replies handed out in call order.
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::with(Script::Sequence(Mutex::new(replies.into_iter().map(Into::into).collect())))
    }

    /// Replies keyed by canonical session hash.
    pub fn keyed(map: HashMap<String, String>) -> Self {
        Self::with(Script::Keyed(map))
    }

    pub fn responder(f: impl Fn(&[ChatMessage]) -> Option<String> + Send + Sync + 'static) -> Self {
        Self::with(Script::Responder(Box::new(f)))
    }

    /// Loads a YAML file of the form `replies: [..]` as a sequence script.
    pub fn from_yaml_file(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let file: ScriptFile =
            serde_yaml::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::sequence(file.replies))
    }

    fn with(script: Script) -> Self {
        Self { script, fallback: None, calls: AtomicUsize::new(0) }
    }

    /// Turns off strict mode: unmatched sessions get `reply`.
    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Replies still queued in a sequence script.
    pub fn remaining(&self) -> usize {
        match &self.script {
            Script::Sequence(q) => q.lock().unwrap().len(),
            _ => 0,
        }
    }
}

impl ChatModel for ScriptedModel {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_session(session)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = match &self.script {
            Script::Sequence(q) => q.lock().unwrap().pop_front(),
            Script::Keyed(map) => map.get(&session_hash(session)).cloned(),
            Script::Responder(f) => f(session),
        };
        reply
            .or_else(|| self.fallback.clone())
            .ok_or_else(|| GatewayError::ScriptMiss(session_hash(session)))
    }
}

/// Retries transient failures with exponential backoff.
pub struct Retrying<M> {
    inner: M,
    max_retries: u32,
    backoff: Duration,
    attempts: AtomicUsize,
}

impl<M: ChatModel> Retrying<M> {
    pub fn new(inner: M, max_retries: u32, backoff: Duration) -> Self {
        Self { inner, max_retries, backoff, attempts: AtomicUsize::new(0) }
    }

    /// Total attempts issued to the inner model so far.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: ChatModel> ChatModel for Retrying<M> {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.attempts.fetch_add(1, Ordering::SeqCst);
            match self.inner.complete(session) {
                Ok(reply) => return Ok(reply),
                Err(e) if e.is_transient() && attempt <= self.max_retries => {
                    log::warn!("gateway attempt {attempt} failed ({e}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    2
}

fn default_max_tokens() -> u32 {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// Full URL of an OpenAI-compatible chat completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl GatewayConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }

    pub fn from_yaml_file(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_yaml::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_secs == 0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(GatewayError::Config("endpoint is empty".into()));
        }
        Ok(())
    }

    /// The HTTP model wrapped in the configured retry policy.
    pub fn connect(&self) -> Result<Retrying<HttpChatModel>, GatewayError> {
        let model = HttpChatModel::new(self.clone())?;
        Ok(Retrying::new(model, self.max_retries, Duration::from_millis(500)))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

/// Chat-completions over HTTP with JSON bodies.
pub struct HttpChatModel {
    config: GatewayConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpChatModel {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { config, client, api_key: std::env::var(API_KEY_ENV).ok() })
    }
}

impl ChatModel for HttpChatModel {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_session(session)?;
        let body = CompletionRequest {
            model: &self.config.model,
            messages: session,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http { status: status.as_u16(), body: text });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Protocol("response has no message content".into()))
    }
}

/// One recorded gateway call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub hash: String,
    pub session: Vec<ChatMessage>,
    pub reply: String,
}

impl StoreEntry {
    pub fn new(session: &[ChatMessage], reply: impl Into<String>) -> Self {
        Self { hash: session_hash(session), session: session.to_vec(), reply: reply.into() }
    }
}

/// Append-only JSON-lines file of recorded calls.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionStore {
    pub entries: Vec<StoreEntry>,
}

impl SessionStore {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| GatewayError::Store(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("store entries serialize") + "\n")
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        fs::write(path, self.to_jsonl()).map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))
    }
}

/// Wraps a live gateway and persists every (session, reply) pair.
pub struct Recorder<M> {
    inner: M,
    path: Option<PathBuf>,
    store: Mutex<SessionStore>,
}

impl<M: ChatModel> Recorder<M> {
    /// Records in memory only.
    pub fn new(inner: M) -> Self {
        Self { inner, path: None, store: Mutex::new(SessionStore::default()) }
    }

    /// Records and appends each entry to `path`, truncating it first.
    pub fn to_file(inner: M, path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        fs::write(&path, "").map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?;
        Ok(Self { inner, path: Some(path), store: Mutex::new(SessionStore::default()) })
    }

    pub fn store(&self) -> SessionStore {
        self.store.lock().unwrap().clone()
    }
}

impl<M: ChatModel> ChatModel for Recorder<M> {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        let reply = self.inner.complete(session)?;
        let entry = StoreEntry::new(session, reply.clone());
        let mut store = self.store.lock().unwrap();
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&entry).expect("store entries serialize");
            OpenOptions::new()
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"))
                .map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?;
        }
        store.entries.push(entry);
        Ok(reply)
    }
}

/// Serves replies from a recorded store. Repeated identical sessions get their
/// recorded replies in order; once exhausted the last one is repeated.
pub struct Replay {
    replies: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl Replay {
    pub fn new(store: &SessionStore) -> Self {
        let mut replies: HashMap<String, Vec<String>> = HashMap::new();
        for e in &store.entries {
            replies.entry(e.hash.clone()).or_default().push(e.reply.clone());
        }
        Self { replies, cursors: Mutex::new(HashMap::new()) }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(&SessionStore::load(path)?))
    }
}

impl ChatModel for Replay {
    fn complete(&self, session: &[ChatMessage]) -> Result<String, GatewayError> {
        validate_session(session)?;
        let hash = session_hash(session);
        let replies = self.replies.get(&hash).ok_or_else(|| GatewayError::ReplayMiss(hash.clone()))?;
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(hash).or_insert(0);
        let reply = replies[(*cursor).min(replies.len() - 1)].clone();
        *cursor += 1;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    fn session(prompt: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user(prompt)]
    }

    #[test]
    fn keyed_script_is_deterministic() {
        let s = session("hello");
        let model = ScriptedModel::keyed(HashMap::from([(session_hash(&s), "X".to_string())]));
        assert_eq!(model.complete(&s).unwrap(), "X");
        assert_eq!(model.complete(&s).unwrap(), "X");
    }

    #[test]
    fn strict_script_misses() {
        let model = ScriptedModel::keyed(HashMap::new());
        assert!(matches!(model.complete(&session("?")), Err(GatewayError::ScriptMiss(_))));
        let lenient = ScriptedModel::keyed(HashMap::new()).with_fallback("default");
        assert_eq!(lenient.complete(&session("?")).unwrap(), "default");
    }

    #[test]
    fn sequence_script_runs_out() {
        let model = ScriptedModel::sequence(["a"]);
        assert_eq!(model.complete(&session("1")).unwrap(), "a");
        assert!(matches!(model.complete(&session("2")), Err(GatewayError::ScriptMiss(_))));
    }

    #[test]
    fn session_must_end_with_user() {
        let model = ScriptedModel::sequence(["a"]);
        let s = vec![ChatMessage::user("q"), ChatMessage::assistant("a")];
        assert!(matches!(model.complete(&s), Err(GatewayError::InvalidSession(_))));
        assert!(matches!(model.complete(&session("   ")), Err(GatewayError::EmptyPrompt)));
    }

    struct Flaky {
        failures: AtomicUsize,
    }

    impl ChatModel for Flaky {
        fn complete(&self, _: &[ChatMessage]) -> Result<String, GatewayError> {
            if self.failures.fetch_sub(1, Ordering::SeqCst) > 0 {
                Err(GatewayError::Transport("connection reset".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn transient_failure_is_retried() {
        let model = Retrying::new(Flaky { failures: AtomicUsize::new(1) }, 1, Duration::ZERO);
        assert_eq!(model.complete(&session("q")).unwrap(), "ok");
        assert_eq!(model.attempts(), 2);

        let model = Retrying::new(Flaky { failures: AtomicUsize::new(2) }, 1, Duration::ZERO);
        assert!(matches!(model.complete(&session("q")), Err(GatewayError::Transport(_))));
        assert_eq!(model.attempts(), 2);
    }

    #[test]
    fn hash_ignores_trailing_whitespace_only() {
        let a = session("line one\nline two");
        let b = session("line one  \r\nline two\t");
        let c = session("line  one\nline two");
        assert_eq!(session_hash(&a), session_hash(&b));
        assert_ne!(session_hash(&a), session_hash(&c));
        let d = vec![ChatMessage::user("sys"), ChatMessage::user("line one\nline two")];
        assert_ne!(session_hash(&a), session_hash(&d));
    }

    #[test]
    fn record_then_replay() {
        let recorder = Recorder::new(ScriptedModel::sequence(["r1", "r2"]));
        recorder.complete(&session("q1")).unwrap();
        recorder.complete(&session("q2")).unwrap();
        let store = recorder.store();
        assert_eq!(store.entries.len(), 2);

        let back = SessionStore::from_jsonl(&store.to_jsonl()).unwrap();
        assert_eq!(back, store);
        let replay = Replay::new(&back);
        assert_eq!(replay.complete(&session("q2")).unwrap(), "r2");
        assert_eq!(replay.complete(&session("q1")).unwrap(), "r1");
        assert!(matches!(replay.complete(&session("q3")), Err(GatewayError::ReplayMiss(_))));
    }

    #[test]
    fn recorder_appends_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let recorder = Recorder::to_file(ScriptedModel::sequence(["r1", "r2"]), &path).unwrap();
        recorder.complete(&session("q1")).unwrap();
        recorder.complete(&session("q2")).unwrap();
        assert_eq!(SessionStore::load(&path).unwrap(), recorder.store());
    }

    #[test]
    fn config_validation() {
        let mut cfg = GatewayConfig::new("http://localhost:1/v1/chat/completions", "mixtral");
        assert_eq!(cfg.temperature, 0.0);
        assert!(cfg.validate().is_ok());
        cfg.timeout_secs = 0;
        assert!(matches!(cfg.validate(), Err(GatewayError::Config(_))));
        let parsed: GatewayConfig = serde_yaml::from_str("endpoint: http://x\nmodel: m\n").unwrap();
        assert_eq!(parsed.max_retries, 2);
    }

    /// Serves exactly one HTTP request with `status` and `body`, returning the request body.
    fn one_shot_server(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            String::from_utf8(request).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn http_model_speaks_chat_completions() {
        let (url, server) = one_shot_server("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"pong"}}]}"#);
        let model = HttpChatModel::new(GatewayConfig::new(url, "mixtral-8x7b")).unwrap();
        assert_eq!(model.complete(&session("ping")).unwrap(), "pong");
        let request: serde_json::Value = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(request["model"], "mixtral-8x7b");
        assert_eq!(request["temperature"], 0.0);
        assert_eq!(request["messages"][1]["role"], "user");
        assert_eq!(request["messages"][1]["content"], "ping");
    }

    #[test]
    fn http_errors_are_classified() {
        let (url, server) = one_shot_server("503 Service Unavailable", "{}");
        let model = HttpChatModel::new(GatewayConfig::new(url, "m")).unwrap();
        let err = model.complete(&session("ping")).unwrap_err();
        server.join().unwrap();
        assert!(matches!(err, GatewayError::Http { status: 503, .. }));
        assert!(err.is_transient());
    }
}
