//! Chat-completion backends.
//!
//! [`HttpBackend`] speaks the OpenAI-compatible `chat/completions` protocol.
//! [`ScriptedBackend`] replays canned responses from a transcript and is
//! what tests and replays run against. Every call is stateless: a request
//! carries exactly one system message and one user message.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

/// Line separating consecutive responses in a transcript file.
pub const TRANSCRIPT_DELIMITER: &str = "@@@@ response-break @@@@";

pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("api error (HTTP {status}): {body}")]
    Api { status: u16, body: String },
    #[error("transcript exhausted after {used} responses")]
    TranscriptExhausted { used: usize },
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no price entry for model `{0}`")]
    UnknownModel(String),
    #[error("cannot read transcript {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub model: String,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(system: &str, user: &str, model: &str) -> ChatRequest {
        ChatRequest {
            system: system.to_string(),
            user: user.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            model: model.to_string(),
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.system.trim().is_empty() || self.user.trim().is_empty() {
            return Err(LlmError::InvalidRequest(
                "system and user messages must be non-empty".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// The JSON body sent to a chat-completions endpoint.
    pub fn body(&self) -> serde_json::Value {
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": self.system},
                {"role": "user", "content": self.user},
            ],
            "temperature": self.temperature,
        });
        if let Some(n) = self.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_id: String,
}

/// A source of completions. Implementations must be safe to share between
/// concurrently running searches.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Short label recorded in run logs.
    fn id(&self) -> String;
}

/// Rough token count used when a backend reports none: one token per four
/// characters.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Live backend for OpenAI-compatible servers.
///
/// The API key is read from `key_env` on every call and never stored or
/// logged.
#[derive(Debug)]
pub struct HttpBackend {
    endpoint: String,
    key_env: String,
    max_retries: u32,
    backoff: Duration,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        key_env: &str,
        timeout: Duration,
        max_retries: u32,
    ) -> Result<HttpBackend, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            endpoint: endpoint.to_string(),
            key_env: key_env.to_string(),
            max_retries,
            backoff: Duration::from_millis(500),
            client,
        })
    }

    /// Base delay of the exponential backoff (doubling per retry).
    pub fn with_backoff(mut self, base: Duration) -> HttpBackend {
        self.backoff = base;
        self
    }

    /// Fails early when the key variable is unset.
    pub fn check_key(&self) -> Result<(), LlmError> {
        self.key().map(|_| ())
    }

    fn key(&self) -> Result<String, LlmError> {
        match std::env::var(&self.key_env) {
            Ok(k) if !k.is_empty() => Ok(k),
            _ => Err(LlmError::MissingKey(self.key_env.clone())),
        }
    }

    fn attempt(&self, body: &serde_json::Value, key: &str) -> Result<ChatResponse, Attempt> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(LlmError::Transport(e.without_url().to_string())))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| Attempt::Retry(LlmError::Transport(e.to_string())))?;
        if !status.is_success() {
            let err = LlmError::Api {
                status: status.as_u16(),
                body: text,
            };
            return if status.as_u16() == 429 || status.is_server_error() {
                Err(Attempt::Retry(err))
            } else {
                Err(Attempt::Fatal(err))
            };
        }
        parse_completion(&text).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

fn parse_completion(body: &str) -> Result<ChatResponse, LlmError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let text = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::MalformedResponse("no message content".into()))?;
    let (prompt_tokens, completion_tokens) = match wire.usage {
        Some(u) => (u.prompt_tokens, u.completion_tokens),
        None => (0, estimate_tokens(&text)),
    };
    Ok(ChatResponse {
        text,
        prompt_tokens,
        completion_tokens,
        backend_id: "http".into(),
    })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let key = self.key()?;
        let body = req.body();
        let mut retries = 0;
        loop {
            match self.attempt(&body, &key) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if retries >= self.max_retries {
                        return Err(e);
                    }
                    let delay = self.backoff * 2u32.pow(retries);
                    tracing::warn!(endpoint = %self.endpoint, retry = retries + 1, error = %e, "retrying completion");
                    std::thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }

    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }
}

/// Replays responses in order; errors once they run out.
#[derive(Debug)]
pub struct ScriptedBackend {
    responses: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> ScriptedBackend {
        ScriptedBackend {
            responses,
            cursor: Mutex::new(0),
        }
    }

    /// Parses transcript text: responses separated by lines consisting of
    /// [`TRANSCRIPT_DELIMITER`].
    pub fn from_transcript(text: &str) -> ScriptedBackend {
        ScriptedBackend::new(split_transcript(text))
    }

    pub fn from_file(path: &Path) -> Result<ScriptedBackend, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(ScriptedBackend::from_transcript(&text))
    }

    /// Responses handed out so far.
    pub fn used(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let mut cursor = self.cursor.lock().unwrap();
        let text = self
            .responses
            .get(*cursor)
            .ok_or(LlmError::TranscriptExhausted { used: *cursor })?
            .clone();
        *cursor += 1;
        Ok(ChatResponse {
            prompt_tokens: estimate_tokens(&req.system) + estimate_tokens(&req.user),
            completion_tokens: estimate_tokens(&text),
            text,
            backend_id: "scripted".into(),
        })
    }

    fn id(&self) -> String {
        "scripted".into()
    }
}

pub fn split_transcript(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim_end() == TRANSCRIPT_DELIMITER {
            out.push(current.trim_matches('\n').to_string());
            current.clear();
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    let last = current.trim_matches('\n');
    if !last.trim().is_empty() {
        out.push(last.to_string());
    }
    out
}

/// Inverse of [`split_transcript`].
pub fn join_transcript<S: AsRef<str>>(responses: &[S]) -> String {
    let mut out = String::new();
    for (i, r) in responses.iter().enumerate() {
        if i > 0 {
            out.push('\n');
            out.push_str(TRANSCRIPT_DELIMITER);
            out.push('\n');
        }
        out.push_str(r.as_ref());
    }
    out.push('\n');
    out
}

/// Token totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn add(&mut self, r: &ChatResponse) {
        self.prompt_tokens += r.prompt_tokens;
        self.completion_tokens += r.completion_tokens;
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;

    fn add(self, o: Usage) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens + o.prompt_tokens,
            completion_tokens: self.completion_tokens + o.completion_tokens,
        }
    }
}

/// Price per token, in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Price {
    pub prompt: f64,
    pub completion: f64,
}

pub type PriceTable = BTreeMap<String, Price>;

/// List prices for the models the search was designed around.
pub fn default_prices() -> PriceTable {
    let mut t = PriceTable::new();
    t.insert(
        "gpt-4".into(),
        Price {
            prompt: 30e-6,
            completion: 60e-6,
        },
    );
    t.insert(
        "gpt-4o".into(),
        Price {
            prompt: 2.5e-6,
            completion: 10e-6,
        },
    );
    t.insert(
        "gpt-3.5-turbo".into(),
        Price {
            prompt: 0.5e-6,
            completion: 1.5e-6,
        },
    );
    t
}

pub fn estimate_cost(usage: &Usage, model: &str, prices: &PriceTable) -> Result<f64, LlmError> {
    let p = prices
        .get(model)
        .ok_or_else(|| LlmError::UnknownModel(model.to_string()))?;
    Ok(usage.prompt_tokens as f64 * p.prompt + usage.completion_tokens as f64 * p.completion)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new("sys", "user", "gpt-4o")
    }

    #[test]
    fn scripted_cursor() {
        let b = ScriptedBackend::new(vec!["a".into(), "b".into()]);
        assert_eq!(b.complete(&req()).unwrap().text, "a");
        assert_eq!(b.complete(&req()).unwrap().text, "b");
        assert!(matches!(
            b.complete(&req()),
            Err(LlmError::TranscriptExhausted { used: 2 })
        ));
    }

    #[test]
    fn identical_scripted_backends_agree() {
        let t = "one\n@@@@ response-break @@@@\ntwo\n";
        let (a, b) = (
            ScriptedBackend::from_transcript(t),
            ScriptedBackend::from_transcript(t),
        );
        for _ in 0..2 {
            assert_eq!(a.complete(&req()).unwrap(), b.complete(&req()).unwrap());
        }
    }

    #[test]
    fn transcript_round_trip() {
        let rs = vec![
            "first\nline two".to_string(),
            "BEGIN EXPRESSIONS\nc1*x1\nEND EXPRESSIONS".to_string(),
            String::new(),
            "last".to_string(),
        ];
        assert_eq!(split_transcript(&join_transcript(&rs)), rs);
    }

    #[test]
    fn request_validation() {
        let mut r = req();
        r.temperature = 2.5;
        assert!(r.validate().is_err());
        let r = ChatRequest::new("", "u", "m");
        assert!(r.validate().is_err());
        assert_eq!(req().temperature, 0.7);
    }

    #[test]
    fn body_has_one_system_and_one_user_message() {
        let b = req().body();
        let msgs = b["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0]["role"], "system");
        assert_eq!(msgs[1]["role"], "user");
    }

    #[test]
    fn cost_is_linear() {
        let mut t = PriceTable::new();
        t.insert(
            "m".into(),
            Price {
                prompt: 0.25,
                completion: 0.5,
            },
        );
        assert_eq!(estimate_cost(&Usage::default(), "m", &t).unwrap(), 0.0);
        let u = Usage {
            prompt_tokens: 1000,
            completion_tokens: 1000,
        };
        assert_eq!(estimate_cost(&u, "m", &t).unwrap(), 1000.0 * 0.25 + 1000.0 * 0.5);
        assert!(matches!(
            estimate_cost(&u, "other", &t),
            Err(LlmError::UnknownModel(_))
        ));
    }

    #[test]
    fn wire_parsing() {
        let r = parse_completion(
            r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#,
        )
        .unwrap();
        assert_eq!((r.text.as_str(), r.prompt_tokens, r.completion_tokens), ("hi", 3, 1));
        assert!(parse_completion(r#"{"choices":[]}"#).is_err());
    }
}
