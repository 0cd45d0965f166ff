//! Completion backends and answer extraction.

mod http;
mod mock;

use std::time::Duration;

use thiserror::Error;

pub use http::HttpBackend;
pub use mock::{MockBackend, MockMode};

use crate::dataset::Record;
use crate::prompt::Prompt;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: usize },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub retries: usize,
    /// Delay before retry `i` is `backoff * 2^i`.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    /// Full URL of a completion endpoint, e.g. `http://127.0.0.1:8080/v1/completions`.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "http://127.0.0.1:8080/v1/completions".into(),
            model: "llama-2-13b".into(),
            api_key: None,
            max_tokens: 4,
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens < 1 {
            return Err(LlmError::Config("max_tokens must be at least 1".into()));
        }
        if self.max_concurrency < 1 {
            return Err(LlmError::Config("max_concurrency must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub backend: String,
}

/// What a backend sees: the prompt, and for test doubles the query record.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a Prompt,
    pub query: Option<&'a Record>,
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: CompletionRequest<'_>) -> Result<Completion, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Yes,
    No,
    Unparsed,
}

impl Verdict {
    pub fn as_label(self) -> Option<bool> {
        match self {
            Verdict::Yes => Some(true),
            Verdict::No => Some(false),
            Verdict::Unparsed => None,
        }
    }
}

/// Tokens inspected by [`extract_answer`].
pub const ANSWER_WINDOW: usize = 16;

/// First standalone "yes"/"no" (any case) among the first 16 alphanumeric tokens.
pub fn extract_answer(text: &str) -> Verdict {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(ANSWER_WINDOW)
        .find_map(|t| {
            if t.eq_ignore_ascii_case("yes") {
                Some(Verdict::Yes)
            } else if t.eq_ignore_ascii_case("no") {
                Some(Verdict::No)
            } else {
                None
            }
        })
        .unwrap_or(Verdict::Unparsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers() {
        assert_eq!(extract_answer("Yes"), Verdict::Yes);
        assert_eq!(extract_answer(" no, because the donor…"), Verdict::No);
        assert_eq!(extract_answer("Maybe."), Verdict::Unparsed);
        assert_eq!(extract_answer("YES!"), Verdict::Yes);
        assert_eq!(extract_answer("Nope, yes"), Verdict::Yes);
        assert_eq!(extract_answer("Notably"), Verdict::Unparsed);
        assert_eq!(extract_answer(""), Verdict::Unparsed);
        let late = format!("{} yes", "word ".repeat(16));
        assert_eq!(extract_answer(&late), Verdict::Unparsed);
        let edge = format!("{} yes", "word ".repeat(15));
        assert_eq!(extract_answer(&edge), Verdict::Yes);
    }

    #[test]
    fn config_validation() {
        BackendConfig::default().validate().unwrap();
        let bad = BackendConfig {
            max_concurrency: 0,
            ..BackendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = BackendConfig {
            max_tokens: 0,
            ..BackendConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn extraction_is_total_and_deterministic(s in ".{0,80}") {
            proptest::prop_assert_eq!(extract_answer(&s), extract_answer(&s));
        }
    }
}
