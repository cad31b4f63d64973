//! OpenAI-compatible chat-completions backend. One user message per call:
//! the rendered prompt text followed by labelled base64 image segments.
//! Temperature is pinned to 0.

use super::prompt::PromptBundle;
use super::GatewayError;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Deserialize;
use serde_json::json;

pub const ENDPOINT_ENV: &str = "VLM_ENDPOINT";
pub const API_KEY_ENV: &str = "VLM_API_KEY";

const TRANSIENT_RETRIES: u32 = 2;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
}

impl RemoteConfig {
    /// Endpoint and key from VLM_ENDPOINT / VLM_API_KEY; model from config.
    pub fn from_env(model: impl Into<String>) -> Result<RemoteConfig, GatewayError> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| GatewayError::Config(format!("{ENDPOINT_ENV} is not set")))?;
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| GatewayError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(RemoteConfig {
            endpoint,
            api_key,
            model: model.into(),
        })
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: String,
}

#[derive(Debug, Default, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> RemoteBackend {
        RemoteBackend {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> serde_json::Value {
        let mut content = vec![json!({"type": "text", "text": bundle.render_text()})];
        for image in &bundle.images {
            content.push(json!({"type": "text", "text": format!("[image: {}]", image.label)}));
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", B64.encode(&image.bytes))}
            }));
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        })
    }

    /// Issue one completion. Transient failures (5xx, transport) retry up to
    /// the retry budget; 401-class failures never retry.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<(String, u64, u64), GatewayError> {
        let body = self.request_body(bundle);
        let url = format!(
            "{}/v1/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        );
        let mut retries = 0;
        loop {
            let result = self
                .client
                .post(&url)
                .bearer_auth(&self.config.api_key)
                .json(&body)
                .send();
            let retriable = match result {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse = resp.json().map_err(|e| {
                            GatewayError::Remote {
                                message: format!("bad completion payload: {e}"),
                                retries,
                            }
                        })?;
                        let text = parsed
                            .choices
                            .first()
                            .map(|c| c.message.content.clone())
                            .unwrap_or_default();
                        let usage = parsed.usage.unwrap_or_default();
                        return Ok((text, usage.prompt_tokens, usage.completion_tokens));
                    }
                    if status == reqwest::StatusCode::UNAUTHORIZED
                        || status == reqwest::StatusCode::FORBIDDEN
                    {
                        return Err(GatewayError::Auth(status.as_u16()));
                    }
                    format!("HTTP {status}")
                }
                Err(e) => e.to_string(),
            };
            if retries >= TRANSIENT_RETRIES {
                return Err(GatewayError::Remote {
                    message: retriable,
                    retries,
                });
            }
            retries += 1;
        }
    }
}
