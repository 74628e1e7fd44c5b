//! Chat backends: scripted fixtures, closures, and a chat-completions HTTP client.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::LlmError;

pub const API_KEY_ENV: &str = "EXPDESIGN_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 4096,
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn chat(&self, system: &str, user: &str, params: &SamplingParams) -> Result<String, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn chat(&self, system: &str, user: &str, params: &SamplingParams) -> Result<String, LlmError> {
        (**self).chat(system, user, params)
    }
}

/// Round number announced by a rendered user prompt (`This is round N.`).
pub fn prompt_round(user: &str) -> Option<usize> {
    let rest = &user[user.find("This is round ")? + "This is round ".len()..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// Replays one fixture per round. The round is read from the prompt, so
/// re-prompts within a round see the same text. Fixtures live in a directory
/// as `round-<i>.txt`.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    fixtures: Vec<Option<String>>,
    source: Option<PathBuf>,
}

impl ScriptedBackend {
    /// `fixtures[0]` answers round 1.
    pub fn new(fixtures: Vec<String>) -> Self {
        Self {
            fixtures: fixtures.into_iter().map(Some).collect(),
            source: None,
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, LlmError> {
        let entries = fs::read_dir(dir).map_err(|e| LlmError::Fixture(format!("{}: {e}", dir.display())))?;
        let mut fixtures: Vec<Option<String>> = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| LlmError::Fixture(e.to_string()))?.path();
            let Some(round) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("round-")?.strip_suffix(".txt")?.parse::<usize>().ok())
                .filter(|&r| r >= 1)
            else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
            if fixtures.len() < round {
                fixtures.resize(round, None);
            }
            fixtures[round - 1] = Some(text);
        }
        if fixtures.is_empty() {
            return Err(LlmError::Fixture(format!("no round-<i>.txt files in {}", dir.display())));
        }
        Ok(Self {
            fixtures,
            source: Some(dir.to_path_buf()),
        })
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }
}

impl LlmBackend for ScriptedBackend {
    fn chat(&self, _system: &str, user: &str, _params: &SamplingParams) -> Result<String, LlmError> {
        let round = prompt_round(user).ok_or_else(|| LlmError::Fixture("prompt does not state its round".into()))?;
        self.fixtures
            .get(round - 1)
            .cloned()
            .flatten()
            .ok_or_else(|| LlmError::Fixture(format!("no fixture for round {round}")))
    }
}

/// Backend driven by a closure over `(call_index, system, user)`. Each
/// instance counts its own calls from zero.
pub struct FnBackend<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnBackend<F>
where
    F: Fn(usize, &str, &str) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> LlmBackend for FnBackend<F>
where
    F: Fn(usize, &str, &str) -> Result<String, LlmError> + Send + Sync,
{
    fn chat(&self, system: &str, user: &str, _params: &SamplingParams) -> Result<String, LlmError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(i, system, user)
    }
}

/// Client for an OpenAI-style `/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent,
        }
    }

    /// Reads the key from `EXPDESIGN_API_KEY` when set.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        Self::new(endpoint, model, std::env::var(API_KEY_ENV).ok(), timeout)
    }
}

pub fn request_body(model: &str, system: &str, user: &str, params: &SamplingParams) -> Value {
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    })
}

/// Pulls `choices[0].message.content` out of a response document.
pub fn response_text(body: &Value) -> Result<String, LlmError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol(format!("no choices[0].message.content in response: {body}")))
}

impl LlmBackend for HttpBackend {
    fn chat(&self, system: &str, user: &str, params: &SamplingParams) -> Result<String, LlmError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = request_body(&self.model, system, user, params);
        let mut resp = req
            .send(serde_json::to_vec(&body).expect("json value serializes"))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        let doc: Value = serde_json::from_str(&text).map_err(|e| LlmError::Protocol(e.to_string()))?;
        response_text(&doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_is_read_from_prompt() {
        assert_eq!(prompt_round("This is round 1. We are beginning"), Some(1));
        assert_eq!(prompt_round("x\nThis is round 12.\n"), Some(12));
        assert_eq!(prompt_round("no round"), None);
    }

    #[test]
    fn scripted_answers_by_round() {
        let b = ScriptedBackend::new(vec!["one".into(), "two".into()]);
        let p = SamplingParams::default();
        assert_eq!(b.chat("", "This is round 2.", &p).unwrap(), "two");
        assert_eq!(b.chat("", "This is round 1.", &p).unwrap(), "one");
        assert!(matches!(b.chat("", "This is round 3.", &p), Err(LlmError::Fixture(_))));
    }

    #[test]
    fn fixture_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("round-2.txt"), "second").unwrap();
        fs::write(dir.path().join("round-1.txt"), "first").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let b = ScriptedBackend::from_dir(dir.path()).unwrap();
        let p = SamplingParams::default();
        assert_eq!(b.chat("", "This is round 1.", &p).unwrap(), "first");
        assert_eq!(b.chat("", "This is round 2.", &p).unwrap(), "second");

        let empty = tempfile::tempdir().unwrap();
        assert!(ScriptedBackend::from_dir(empty.path()).is_err());
    }

    #[test]
    fn wire_format() {
        let body = request_body("m", "sys", "usr", &SamplingParams::default());
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["max_tokens"], 4096);

        let doc = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(response_text(&doc).unwrap(), "hi");
        assert!(matches!(response_text(&json!({})), Err(LlmError::Protocol(_))));
    }
}
