//! Completion backends: live providers behind one chat-completion shape,
//! scripted mocks, and record/replay cassettes.

mod cassette;
mod http;
mod mock;
mod providers;
mod resilient;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{prompt_hash, CassetteBackend, CassetteEntry, CassetteFactory, CassetteMode};
pub use http::OpenAiCompatTransport;
pub use mock::{simulated_response, CallCounter, MockBackend, MockFactory, Script, ScriptedTransport};
pub use providers::{default_models, provider, LiveFactory, Provider, PROVIDERS};
pub use resilient::{
    InFlightProbe, ResilientBackend, RetryPolicy, Sleeper, Throttle, ThrottleConfig, Transport, TransportError,
};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub provider: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    /// Short display name used in reports; defaults to `model_name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Endpoint override for `openai_compatible` or self-hosted providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl ModelSpec {
    pub fn new(provider: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            model_name: model_name.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_timeout_secs: DEFAULT_TIMEOUT_SECS,
            label: None,
            base_url: None,
            api_key_env: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn id(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.model_name)
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.model_name.trim().is_empty() {
            return Err(BackendError::Config("model_name must not be empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::Config(format!(
                "{}: temperature must be >= 0, got {}",
                self.model_name, self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompletionExchange {
    pub prompt: String,
    pub response: String,
    pub latency: Duration,
    pub attempt_count: u32,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{model}: gave up after {attempts} attempts: {cause}")]
    Exhausted { model: String, attempts: u32, cause: String },
    #[error("{model}: request rejected: {cause}")]
    Rejected { model: String, cause: String },
    #[error("cassette miss for prompt hash {hash}")]
    CassetteMiss { hash: String },
    #[error("cassette: {0}")]
    Cassette(String),
    #[error("backend config: {0}")]
    Config(String),
}

/// A completion endpoint bound to one model.
pub trait Backend: Send + Sync {
    fn spec(&self) -> &ModelSpec;

    fn complete(&self, prompt: &str) -> Result<CompletionExchange, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn spec(&self) -> &ModelSpec {
        (**self).spec()
    }

    fn complete(&self, prompt: &str) -> Result<CompletionExchange, BackendError> {
        (**self).complete(prompt)
    }
}

/// Builds one backend per model. Experiments ask for every model they need
/// before issuing any request, so credential problems surface up front.
pub trait BackendFactory: Send + Sync {
    fn create(&self, spec: &ModelSpec) -> Result<Arc<dyn Backend>, BackendError>;
}

impl<F> BackendFactory for F
where
    F: Fn(&ModelSpec) -> Result<Arc<dyn Backend>, BackendError> + Send + Sync,
{
    fn create(&self, spec: &ModelSpec) -> Result<Arc<dyn Backend>, BackendError> {
        self(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_defaults_from_toml() {
        let spec: ModelSpec = toml::from_str("provider = \"openai\"\nmodel_name = \"gpt-4o-mini\"").unwrap();
        assert_eq!(spec.temperature, 0.1);
        assert_eq!(spec.max_tokens, 512);
        assert_eq!(spec.id(), "gpt-4o-mini");
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new("openai", "").validate().is_err());
        let mut s = ModelSpec::new("openai", "m");
        s.temperature = -0.5;
        assert!(s.validate().is_err());
        s.temperature = 0.0;
        assert!(s.validate().is_ok());
    }
}
