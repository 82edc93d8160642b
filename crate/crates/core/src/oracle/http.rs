//! Chat-completion client for a remote judge, plus record/replay backends.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, OracleError, Result};

pub const API_KEY_ENV: &str = "ORACLE_API_KEY";

/// Anything that turns a prompt into judge text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, OracleError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        (**self).complete(prompt)
    }
}

/// OpenAI-style `POST {base_url}/chat/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: API_KEY_ENV.to_owned(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }

    fn attempt(&self, agent: &ureq::Agent, prompt: &str) -> Result<String, OracleError> {
        let mut request = agent
            .post(self.url())
            .header("Content-Type", "application/json");
        match std::env::var(&self.api_key_env) {
            Ok(token) if !token.is_empty() => {
                request = request.header("Authorization", format!("Bearer {token}"));
            }
            _ => log::debug!(
                "{} not set; sending unauthenticated request",
                self.api_key_env
            ),
        }
        let body = self.request_body(prompt).to_string();
        let response = request
            .send(body.as_str())
            .map_err(|e| self.map_transport(e))?;
        let status = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| self.map_transport(e))?;
        if !(200..300).contains(&status) {
            return Err(OracleError::Status { status, body: text });
        }
        extract_content(&text)
    }

    fn map_transport(&self, err: ureq::Error) -> OracleError {
        match err {
            ureq::Error::Timeout(_) => OracleError::Timeout(self.timeout),
            ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => {
                OracleError::Timeout(self.timeout)
            }
            other => OracleError::Network(other.to_string()),
        }
    }
}

/// First choice's message content of a chat-completion response.
pub fn extract_content(body: &str) -> Result<String, OracleError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| OracleError::Decode(format!("{e}: {body}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| OracleError::Decode(format!("no choices[0].message.content in {body}")))
}

impl ChatBackend for RemoteEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut attempt = 0;
        loop {
            match self.attempt(&agent, prompt) {
                Ok(text) => return Ok(text),
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) if attempt >= self.max_retries => {
                    return Err(OracleError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => {
                    let wait = self.backoff(attempt);
                    log::warn!(
                        "judge request failed ({e}); retry {} in {wait:?}",
                        attempt + 1
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}

/// Send `prompt` to the endpoint and return the raw response text.
pub fn llm_choice(prompt: &str, endpoint: &RemoteEndpoint) -> Result<String, OracleError> {
    endpoint.complete(prompt)
}

/// Complete every prompt with at most `concurrency` requests in flight.
/// Results come back in prompt order regardless of completion order.
pub fn complete_all<B: ChatBackend + ?Sized>(
    backend: &B,
    prompts: &[String],
    concurrency: usize,
) -> Vec<Result<String, OracleError>> {
    let workers = concurrency.max(1).min(prompts.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<String, OracleError>>>> =
        prompts.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(prompt) = prompts.get(i) else { break };
                let result = backend.complete(prompt);
                *slots[i].lock().expect("slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("slot poisoned")
                .expect("every prompt completed")
        })
        .collect()
}

/// Hex SHA-256 of the prompt bytes; the fixture lookup key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureLine {
    pub prompt_hash: String,
    pub response_text: String,
}

/// Wraps a backend and appends every successful exchange to a JSON-lines fixture.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(RecordingBackend {
            inner,
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        let text = self.inner.complete(prompt)?;
        let line = FixtureLine {
            prompt_hash: prompt_hash(prompt),
            response_text: text.clone(),
        };
        let mut out = self.out.lock().expect("recorder poisoned");
        let encoded =
            serde_json::to_string(&line).map_err(|e| OracleError::Decode(e.to_string()))?;
        writeln!(out, "{encoded}")
            .and_then(|_| out.flush())
            .map_err(|e| OracleError::Network(format!("writing {}: {e}", self.path.display())))?;
        Ok(text)
    }
}

/// Answers prompts from a recorded fixture; unknown prompts are an error.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut responses = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n as u64 + 1,
                msg: e.to_string(),
            })?;
            responses.insert(entry.prompt_hash, entry.response_text);
        }
        Ok(ReplayBackend { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, prompt: &str) -> Result<String, OracleError> {
        let hash = prompt_hash(prompt);
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(OracleError::ReplayMiss(hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let body =
            r#"{"choices":[{"message":{"role":"assistant","content":"the user will select a"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "the user will select a");
        assert!(matches!(extract_content("{}"), Err(OracleError::Decode(_))));
        assert!(matches!(
            extract_content("not json"),
            Err(OracleError::Decode(_))
        ));
    }

    #[test]
    fn request_body_shape() {
        let ep = RemoteEndpoint::new("http://localhost:9/v1/", "judge");
        assert_eq!(ep.url(), "http://localhost:9/v1/chat/completions");
        let body = ep.request_body("hi");
        assert_eq!(body["model"], "judge");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let mut ep = RemoteEndpoint::new("http://x", "m");
        ep.initial_backoff = Duration::from_millis(100);
        ep.max_backoff = Duration::from_millis(350);
        assert_eq!(ep.backoff(0), Duration::from_millis(100));
        assert_eq!(ep.backoff(1), Duration::from_millis(200));
        assert_eq!(ep.backoff(2), Duration::from_millis(350));
        assert_eq!(ep.backoff(40), Duration::from_millis(350));
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = prompt_hash("abc");
        assert_eq!(
            h,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
