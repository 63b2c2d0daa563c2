use serde_json::{json, Value};

use super::resilient::{Transport, TransportError};
use super::ModelSpec;

/// `POST {base_url}/chat/completions` with a bearer token, the one wire shape
/// every configured provider is reached through.
pub struct OpenAiCompatTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
}

impl OpenAiCompatTransport {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, spec: &ModelSpec) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(spec.request_timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, base_url: base_url.into(), api_key: api_key.into() }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub(crate) fn request_body(spec: &ModelSpec, prompt: &str) -> Value {
    json!({
        "model": spec.model_name,
        "temperature": spec.temperature,
        "max_tokens": spec.max_tokens,
        "messages": [{"role": "user", "content": prompt}],
    })
}

pub(crate) fn response_text(body: &Value) -> Result<String, TransportError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TransportError::fatal(format!("response has no choices[0].message.content: {body}")))
}

impl Transport for OpenAiCompatTransport {
    fn send(&self, spec: &ModelSpec, prompt: &str) -> Result<String, TransportError> {
        let result = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(spec, prompt));
        let mut response = match result {
            Ok(r) => r,
            Err(
                e @ (ureq::Error::Timeout(_)
                | ureq::Error::Io(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound),
            ) => return Err(TransportError::transient(e.to_string())),
            Err(e) => return Err(TransportError::fatal(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::transient(format!("reading body: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::from_status(status, &text));
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| TransportError::fatal(format!("invalid JSON body: {e}")))?;
        response_text(&body)
    }
}
