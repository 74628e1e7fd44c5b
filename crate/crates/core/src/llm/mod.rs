//! Prompt rendering, chat backends and response parsing.

mod backend;
mod parse;
mod prompt;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    prompt_round, request_body, response_text, FnBackend, HttpBackend, LlmBackend, SamplingParams, ScriptedBackend,
    API_KEY_ENV,
};
pub use parse::{parse_solution, ParsedResponse};
pub use prompt::{render_feedback, render_prompt, render_table, Descriptor, Domain, Prompt, PromptSpec, PromptVariant};

#[derive(Debug, Clone, Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("unparseable answer: {0}")]
    Parse(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("gave up after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: usize, last: Box<LlmError> },
}

impl LlmError {
    /// Transport errors, 429 and 5xx responses, and parse failures are worth
    /// another attempt; other statuses and fixture errors are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) | LlmError::Protocol(_) | LlmError::Parse(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            LlmError::Fixture(_) | LlmError::Exhausted { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: usize) -> Self {
        Self {
            max_attempts,
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
        }
    }

    fn backoff(&self, attempt: usize) -> Duration {
        let factor = 1u64 << attempt.min(16);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Calls `backend` until `validate` accepts the answer. Every raw answer is
/// reported to `on_response` along with its 1-based attempt number.
pub fn chat_validated<T>(
    backend: &dyn LlmBackend,
    system: &str,
    user: &str,
    params: &SamplingParams,
    policy: &RetryPolicy,
    mut validate: impl FnMut(&str) -> Result<T, LlmError>,
    mut on_response: impl FnMut(usize, &str),
) -> Result<(String, T), LlmError> {
    if policy.max_attempts == 0 {
        return Err(LlmError::Exhausted {
            attempts: 0,
            last: Box::new(LlmError::Transport("max_attempts is zero".into())),
        });
    }
    let mut last = None;
    for attempt in 0..policy.max_attempts {
        if attempt > 0 {
            std::thread::sleep(policy.backoff(attempt - 1));
        }
        let outcome = backend
            .chat(system, user, params)
            .and_then(|text| {
                on_response(attempt + 1, &text);
                validate(&text).map(|v| (text, v))
            });
        match outcome {
            Ok(ok) => return Ok(ok),
            Err(e) if e.is_retryable() => {
                log::warn!("llm attempt {} failed: {e}", attempt + 1);
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(LlmError::Exhausted {
        attempts: policy.max_attempts,
        last: Box::new(last.expect("at least one attempt ran")),
    })
}

/// [`chat_validated`] without a validator.
pub fn chat_with_retry(
    backend: &dyn LlmBackend,
    system: &str,
    user: &str,
    params: &SamplingParams,
    policy: &RetryPolicy,
) -> Result<String, LlmError> {
    chat_validated(backend, system, user, params, policy, |_| Ok(()), |_, _| {}).map(|(text, ())| text)
}
