use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendConfig, Completion, CompletionBackend, CompletionRequest, LlmError};

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Direct { text: String },
    Choices { choices: Vec<Choice> },
}

enum Failure {
    Retryable(LlmError),
    Fatal(LlmError),
}

/// Blocking client for an OpenAI-style text completion endpoint.
#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    id: String,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let id = format!("http:{}@{}", config.model, config.endpoint);
        Ok(HttpBackend { config, client, id })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, prompt: &str, attempts: usize) -> Result<String, Failure> {
        let body = Body {
            model: &self.config.model,
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
        };
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            Failure::Retryable(if e.is_timeout() {
                LlmError::Timeout { attempts }
            } else {
                LlmError::Transport {
                    attempts,
                    message: e.to_string(),
                }
            })
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            Failure::Retryable(LlmError::Transport {
                attempts,
                message: e.to_string(),
            })
        })?;
        if !status.is_success() {
            let err = LlmError::Status {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            };
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Failure::Retryable(err)
            } else {
                Failure::Fatal(err)
            });
        }
        match serde_json::from_str::<Reply>(&text) {
            Ok(Reply::Direct { text }) => Ok(text),
            Ok(Reply::Choices { choices }) => choices
                .into_iter()
                .next()
                .map(|c| c.text)
                .ok_or_else(|| Failure::Fatal(LlmError::Malformed("empty choices".into()))),
            Err(e) => Err(Failure::Fatal(LlmError::Malformed(e.to_string()))),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let prompt = request.prompt.text();
        let start = Instant::now();
        let total = self.config.retry.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&prompt, attempt) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        latency: start.elapsed(),
                        backend: self.id.clone(),
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempt >= total => return Err(e),
                Err(Failure::Retryable(e)) => {
                    let delay = self.config.retry.backoff * 2u32.saturating_pow(attempt as u32 - 1);
                    log::warn!("attempt {attempt}/{total} failed: {e}; retrying in {delay:?}");
                    thread::sleep(delay.min(Duration::from_secs(30)));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::RetryPolicy;
    use crate::prompt::{assemble_prompt, DemonstrationSet};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    /// Serves `replies` in order, one per connection, and records request bodies.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<std::sync::Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1/completions"), seen)
    }

    fn config(endpoint: String) -> BackendConfig {
        BackendConfig {
            endpoint,
            timeout: Duration::from_secs(5),
            retry: RetryPolicy {
                retries: 2,
                backoff: Duration::from_millis(1),
            },
            ..BackendConfig::default()
        }
    }

    fn ask(b: &HttpBackend) -> Result<Completion, LlmError> {
        let p = assemble_prompt(&DemonstrationSet::new(vec![]), "Is it? Yes or No?");
        b.complete(CompletionRequest { prompt: &p, query: None })
    }

    #[test]
    fn both_reply_shapes() {
        let (url, seen) = serve(vec![
            (200, r#"{"text":" Yes"}"#.into()),
            (200, r#"{"choices":[{"text":" No."}]}"#.into()),
        ]);
        let b = HttpBackend::new(config(url)).unwrap();
        assert_eq!(ask(&b).unwrap().text, " Yes");
        assert_eq!(ask(&b).unwrap().text, " No.");
        let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(body["prompt"], "Is it? Yes or No? Answer:");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 4);
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, seen) = serve(vec![
            (503, "{}".into()),
            (500, "{}".into()),
            (200, r#"{"text":"Yes"}"#.into()),
        ]);
        let b = HttpBackend::new(config(url)).unwrap();
        assert_eq!(ask(&b).unwrap().text, "Yes");
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_and_garbage_are_fatal() {
        let (url, seen) = serve(vec![(400, "bad".into()), (200, "not json".into())]);
        let b = HttpBackend::new(config(url)).unwrap();
        assert!(matches!(ask(&b), Err(LlmError::Status { status: 400, .. })));
        assert!(matches!(ask(&b), Err(LlmError::Malformed(_))));
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn unreachable_endpoint_uses_all_attempts() {
        // bind then drop to get a port nobody listens on
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = HttpBackend::new(config(format!("http://127.0.0.1:{port}/v1/completions"))).unwrap();
        match ask(&b) {
            Err(LlmError::Transport { attempts, .. }) | Err(LlmError::Timeout { attempts }) => {
                assert_eq!(attempts, 3)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let c = BackendConfig {
            max_concurrency: 0,
            ..BackendConfig::default()
        };
        assert!(HttpBackend::new(c).is_err());
    }
}
