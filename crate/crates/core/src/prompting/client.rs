use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no mock rule matches prompt starting {prefix:?}")]
    Unmatched { prefix: String },
    #[error("invalid mock script: {0}")]
    Script(String),
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
    #[error("request failed: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

/// A chat-completion model. Implementations must tolerate concurrent calls.
pub trait ModelClient: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, ModelError>;

    /// Number of completed calls, for simple cost accounting.
    fn calls(&self) -> u64 {
        0
    }
}

/// The text a mock rule is matched against: every message body, joined by
/// newlines. A corrective follow-up therefore still matches the rule that
/// answered the original prompt.
pub fn transcript(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ModelError::Script(format!("{}: {e}", path.display())))
    }

    pub fn rule(mut self, pattern: impl Into<String>, responses: &[&str]) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            responses: responses.iter().map(|s| s.to_string()).collect(),
        });
        self
    }
}

/// Table-driven client: each call pops the next response of the first rule
/// whose pattern occurs in the prompt and still has responses left.
#[derive(Debug)]
pub struct MockClient {
    rules: Vec<(String, Mutex<VecDeque<String>>)>,
    calls: AtomicU64,
}

const PREFIX_LEN: usize = 80;

impl MockClient {
    pub fn new(script: MockScript) -> Self {
        MockClient {
            rules: script
                .rules
                .into_iter()
                .map(|r| (r.pattern, Mutex::new(r.responses.into())))
                .collect(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Ok(Self::new(MockScript::load(path)?))
    }

    /// Responses not yet consumed, summed over all rules.
    pub fn remaining(&self) -> usize {
        self.rules
            .iter()
            .map(|(_, q)| q.lock().unwrap_or_else(|p| p.into_inner()).len())
            .sum()
    }
}

impl ModelClient for MockClient {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _params: &CompletionParams,
    ) -> Result<String, ModelError> {
        let prompt = transcript(messages);
        for (pattern, queue) in &self.rules {
            if !prompt.contains(pattern.as_str()) {
                continue;
            }
            let mut q = queue.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(reply) = q.pop_front() {
                self.calls.fetch_add(1, Ordering::Relaxed);
                return Ok(reply);
            }
        }
        // Name the prompt by the first user message, which identifies the
        // template and query.
        let head = messages
            .iter()
            .find(|m| m.role == Role::User)
            .map_or(prompt.as_str(), |m| m.content.as_str());
        Err(ModelError::Unmatched {
            prefix: head.chars().take(PREFIX_LEN).collect(),
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Client for OpenAI-compatible `/chat/completions` endpoints.
#[derive(Debug)]
pub struct HttpClient {
    base_url: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
    calls: AtomicU64,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl HttpClient {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            agent,
            calls: AtomicU64::new(0),
        }
    }

    /// Configure from `MODEL_API_BASE`, `MODEL_API_KEY` and `MODEL_NAME`.
    pub fn from_env() -> Result<Self, ModelError> {
        let base = std::env::var("MODEL_API_BASE")
            .map_err(|_| ModelError::MissingEnv("MODEL_API_BASE"))?;
        let model =
            std::env::var("MODEL_NAME").map_err(|_| ModelError::MissingEnv("MODEL_NAME"))?;
        let key = std::env::var("MODEL_API_KEY").ok();
        Ok(Self::new(base, key, model))
    }
}

impl ModelClient for HttpClient {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, ModelError> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ModelError::BadResponse(e.to_string()))?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ModelError::BadResponse("no choices in response".into()))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}
