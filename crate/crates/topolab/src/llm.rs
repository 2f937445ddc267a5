//! Chat-completions wire client for the LLM agent backend.
//!
//! One request per agent turn: `POST {base_url}/chat/completions` with a
//! system and a user message. Transient failures (transport errors, timeouts,
//! HTTP 429) are retried up to three attempts with exponential backoff; any
//! other non-2xx status is a protocol error carrying status and body, and a
//! 2xx payload without `choices[0].message.content` is a malformed response.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, Prompt};
use crate::error::{Error, Result};

/// Environment variable holding the bearer token.
pub const ENV_API_KEY: &str = "MAS_LLM_API_KEY";
/// Environment variable holding the endpoint base URL.
pub const ENV_BASE_URL: &str = "MAS_LLM_BASE_URL";

const MAX_ATTEMPTS: u32 = 3;
const BACKOFF_BASE_MS: u64 = 50;

/// Where and how to reach the model server.
#[derive(Clone, Debug)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
}

/// The configuration-file view of an endpoint: credentials and address come
/// from the environment, never from config files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LlmConfig {
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

impl LlmEndpoint {
    /// Read `MAS_LLM_BASE_URL` and `MAS_LLM_API_KEY` and attach them to the
    /// file-supplied model settings.
    pub fn from_env(cfg: &LlmConfig) -> Result<Self> {
        let base_url = std::env::var(ENV_BASE_URL)
            .map_err(|_| Error::Config(format!("{ENV_BASE_URL} is not set")))?;
        let api_key = std::env::var(ENV_API_KEY)
            .map_err(|_| Error::Config(format!("{ENV_API_KEY} is not set")))?;
        Ok(LlmEndpoint {
            base_url,
            api_key,
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            timeout: Duration::from_secs(cfg.timeout_secs),
        })
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// The JSON body sent for one agent turn.
pub fn request_body(ep: &LlmEndpoint, prompt: &Prompt) -> serde_json::Value {
    serde_json::json!({
        "model": ep.model,
        "messages": [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": prompt.user_text},
        ],
        "temperature": ep.temperature,
    })
}

/// Send one chat-completion request for `spec` and return the reply text.
pub fn llm_respond(spec: &AgentSpec, prompt: &Prompt, ep: &LlmEndpoint) -> Result<String> {
    let client = reqwest::blocking::Client::builder()
        .timeout(ep.timeout)
        .build()
        .map_err(|e| Error::BackendUnavailable(format!("http client: {e}")))?;
    let url = ep.completions_url();
    let body = request_body(ep, prompt);

    let mut last_transient = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1)));
        }
        let sent = client
            .post(&url)
            .bearer_auth(&ep.api_key)
            .json(&body)
            .send();
        let resp = match sent {
            Ok(r) => r,
            Err(e) => {
                last_transient = e.to_string();
                continue;
            }
        };
        let status = resp.status();
        if status.as_u16() == 429 {
            last_transient = "http 429 (rate limited)".to_string();
            continue;
        }
        let text = resp
            .text()
            .map_err(|e| Error::MalformedResponse(format!("agent {}: {e}", spec.index)))?;
        if !status.is_success() {
            return Err(Error::Protocol { status: status.as_u16(), body: text });
        }
        return extract_content(&text)
            .ok_or_else(|| {
                Error::MalformedResponse(format!(
                    "agent {}: no choices[0].message.content in reply",
                    spec.index
                ))
            });
    }
    Err(Error::BackendUnavailable(format!(
        "gave up after {MAX_ATTEMPTS} attempts; last failure: {last_transient}"
    )))
}

fn extract_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}
