use std::collections::VecDeque;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dsl::TargetKind;

use super::completion::{parse_completion, Completion};
use super::GatewayError;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub kind: TargetKind,
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(kind: TargetKind, prompt: String) -> GenerationRequest {
        GenerationRequest {
            kind,
            prompt,
            n: 4,
            temperature: 1.2,
            timeout: Duration::from_secs(120),
            max_tokens: 1024,
        }
    }
}

/// Source of raw completion strings.
pub trait Generator: Send {
    fn complete(&mut self, req: &GenerationRequest) -> Result<Vec<String>, GatewayError>;
}

/// Requests up to `req.n` completions and splits each into its blocks.
pub fn generate(req: &GenerationRequest, backend: &mut dyn Generator) -> Result<Vec<Completion>, GatewayError> {
    if req.n == 0 {
        return Err(GatewayError::InvalidRequest("n must be at least 1".into()));
    }
    if !(req.temperature > 0.0) {
        return Err(GatewayError::InvalidRequest("temperature must be positive".into()));
    }
    let mut raw = backend.complete(req)?;
    raw.truncate(req.n);
    Ok(raw.iter().map(|r| parse_completion(r)).collect())
}

/// Mock script: either one shared queue of batches, or one queue per loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockScript {
    Shared(Vec<Vec<String>>),
    PerLoop {
        #[serde(default)]
        de: Vec<Vec<String>>,
        #[serde(default)]
        ae: Vec<Vec<String>>,
    },
}

/// Replays scripted batches in order; each call consumes one batch.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    shared: Option<VecDeque<Vec<String>>>,
    de: VecDeque<Vec<String>>,
    ae: VecDeque<Vec<String>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> MockBackend {
        match script {
            MockScript::Shared(b) => MockBackend {
                shared: Some(b.into()),
                ..Default::default()
            },
            MockScript::PerLoop { de, ae } => MockBackend {
                shared: None,
                de: de.into(),
                ae: ae.into(),
            },
        }
    }

    pub fn from_batches(batches: Vec<Vec<String>>) -> MockBackend {
        MockBackend::new(MockScript::Shared(batches))
    }

    pub fn from_file(path: &Path) -> Result<MockBackend, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        let script: MockScript =
            serde_json::from_str(&text).map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        Ok(MockBackend::new(script))
    }

    pub fn remaining(&self) -> usize {
        self.shared.as_ref().map_or(self.de.len() + self.ae.len(), VecDeque::len)
    }
}

impl Generator for MockBackend {
    fn complete(&mut self, req: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        let queue = match (&mut self.shared, req.kind) {
            (Some(q), _) => q,
            (None, TargetKind::De) => &mut self.de,
            (None, TargetKind::Ae) => &mut self.ae,
        };
        queue
            .pop_front()
            .ok_or_else(|| GatewayError::BackendUnavailable("mock script exhausted".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_attempts: usize,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    cfg: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<HttpBackend, GatewayError> {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend { cfg, api_key, client })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn request_once(&self, req: &GenerationRequest, n: usize) -> Result<Vec<String>, String> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "n": n,
            "max_tokens": req.max_tokens,
        });
        let mut call = self.client.post(self.endpoint()).timeout(req.timeout).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        Ok(parsed
            .choices
            .into_iter()
            .filter_map(|c| c.message.content)
            .collect())
    }
}

impl Generator for HttpBackend {
    /// Keeps requesting until `n` completions arrive (some servers ignore
    /// `n`), retrying failures with exponential backoff. Returns the partial
    /// set once attempts run out.
    fn complete(&mut self, req: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        let mut out: Vec<String> = Vec::new();
        let mut failures = 0;
        let mut last_error = String::from("no response");
        let max_calls = req.n + self.cfg.max_attempts;
        let mut calls = 0;
        while out.len() < req.n && failures < self.cfg.max_attempts && calls < max_calls {
            calls += 1;
            match self.request_once(req, req.n - out.len()) {
                Ok(batch) if !batch.is_empty() => out.extend(batch),
                Ok(_) => {
                    failures += 1;
                    last_error = "empty choices".into();
                }
                Err(e) => {
                    failures += 1;
                    log::warn!("generator request failed ({failures}/{}): {e}", self.cfg.max_attempts);
                    last_error = e;
                }
            }
            if failures > 0 && failures < self.cfg.max_attempts && out.len() < req.n {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (failures - 1).min(16));
                thread::sleep(Duration::from_millis(delay));
            }
        }
        if out.is_empty() {
            return Err(GatewayError::BackendUnavailable(last_error));
        }
        out.truncate(req.n);
        Ok(out)
    }
}
