//! HTTP adapter for an OpenAI-style chat-with-images endpoint.
//!
//! Images travel as base64 data URLs inside `image_url` content parts.
//! Payload encode/decode are plain functions so they can be tested without
//! a network.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{
    ChatRequest, Part, Provider, ProviderCallError, ProviderReply, Role, TokenUsage,
};

pub struct OpenAiProvider {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl OpenAiProvider {
    /// `endpoint` is the API base, e.g. `https://api.openai.com/v1`.
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build();
        OpenAiProvider {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            agent: config.new_agent(),
        }
    }
}

/// Wire payload for one request.
pub fn encode_request(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            let content: Vec<Value> = m
                .parts
                .iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image(img) => {
                        let b64 = base64::engine::general_purpose::STANDARD.encode(&*img.bytes);
                        json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:{};base64,{}", img.mime, b64)}
                        })
                    }
                })
                .collect();
            json!({"role": role, "content": content})
        })
        .collect();
    json!({
        "model": request.settings.model_id,
        "temperature": request.settings.temperature,
        "max_tokens": request.settings.max_tokens,
        "messages": messages,
    })
}

/// Pulls the completion text and token usage out of a response body.
pub fn parse_response(body: &Value) -> Result<(String, Option<TokenUsage>), String> {
    let text = body["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| format!("response missing choices[0].message.content: {body}"))?
        .to_string();
    let usage = body.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
            total_tokens: u.get("total_tokens")?.as_u64()?,
        })
    });
    Ok((text, usage))
}

impl Provider for OpenAiProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderCallError> {
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let payload = encode_request(request);
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&payload)
            .map_err(|e| ProviderCallError::transient(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderCallError::transient(format!("body read: {e}")))?;
        match status {
            200..=299 => {
                let (text, usage) = parse_response(&body).map_err(ProviderCallError::fatal)?;
                Ok(ProviderReply {
                    text,
                    usage,
                    meta: json!({"provider": "openai", "status": status}),
                    latency_ms: None,
                })
            }
            401 | 403 => Err(ProviderCallError::auth(format!(
                "status {status}: {body}"
            ))),
            408 | 429 | 500..=599 => Err(ProviderCallError::transient(format!(
                "status {status}: {body}"
            ))),
            _ => Err(ProviderCallError::fatal(format!(
                "status {status}: {body}"
            ))),
        }
    }

    fn id(&self) -> &str {
        "openai"
    }
}
