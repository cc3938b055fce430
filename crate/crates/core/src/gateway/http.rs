use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Completion, CompletionRequest, GatewayError, Transport, TransportError};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_VAR: &str = "LLM_API_KEY";

/// Blocking client for a `POST {base}/chat/completions` endpoint.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(GatewayError::Auth("API key is empty".into()));
        }
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(true)
            .build();
        Ok(Self {
            agent: config.into(),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    /// Reads the credential from the environment variable `var`.
    pub fn from_env(base_url: &str, var: &str) -> Result<Self, GatewayError> {
        let key = std::env::var(var)
            .map_err(|_| GatewayError::Auth(format!("environment variable {var} is not set")))?;
        Self::new(base_url, key)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

pub(crate) fn request_body(request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": request.messages,
    });
    if let Some(max) = request.max_output_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

pub(crate) fn parse_response(body: &Value) -> Result<Completion, TransportError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Fatal("response has no choices[0].message.content".into()))?;
    let mut token_usage = BTreeMap::new();
    if let Some(usage) = body.get("usage").and_then(Value::as_object) {
        for (k, v) in usage {
            if let Some(n) = v.as_u64() {
                token_usage.insert(k.clone(), n);
            }
        }
    }
    Ok(Completion {
        text: text.to_string(),
        token_usage,
    })
}

impl Transport for HttpTransport {
    fn send(&self, request: &CompletionRequest) -> Result<Completion, TransportError> {
        let result = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(request));
        match result {
            Ok(mut response) => {
                let body: Value = response
                    .body_mut()
                    .read_json()
                    .map_err(|e| TransportError::Fatal(format!("unreadable response body: {e}")))?;
                parse_response(&body)
            }
            Err(ureq::Error::StatusCode(code)) => Err(match code {
                401 | 403 => TransportError::Auth(format!("HTTP {code}")),
                408 | 409 | 429 | 500..=599 => TransportError::Transient(format!("HTTP {code}")),
                _ => TransportError::Fatal(format!("HTTP {code}")),
            }),
            Err(
                e @ (ureq::Error::Io(_)
                | ureq::Error::Timeout(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound),
            ) => Err(TransportError::Transient(e.to_string())),
            Err(e) => Err(TransportError::Fatal(e.to_string())),
        }
    }
}
