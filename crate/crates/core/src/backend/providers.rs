//! Provider table and the live backend factory.
//!
//! | provider            | API key variable      | endpoint                                                  |
//! |---------------------|-----------------------|-----------------------------------------------------------|
//! | `anthropic`         | `ANTHROPIC_API_KEY`   | `https://api.anthropic.com/v1`                            |
//! | `xai`               | `XAI_API_KEY`         | `https://api.x.ai/v1`                                     |
//! | `openai`            | `OPENAI_API_KEY`      | `https://api.openai.com/v1`                               |
//! | `mistral`           | `MISTRAL_API_KEY`     | `https://api.mistral.ai/v1`                               |
//! | `together`          | `TOGETHER_API_KEY`    | `https://api.together.xyz/v1`                             |
//! | `dashscope`         | `DASHSCOPE_API_KEY`   | `https://dashscope-intl.aliyuncs.com/compatible-mode/v1`  |
//! | `google`            | `GEMINI_API_KEY`      | `https://generativelanguage.googleapis.com/v1beta/openai` |
//! | `openrouter`        | `OPENROUTER_API_KEY`  | `https://openrouter.ai/api/v1`                            |
//! | `openai_compatible` | `OPENAI_COMPATIBLE_API_KEY` | `base_url` from the model entry (required)          |

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::http::OpenAiCompatTransport;
use super::resilient::{ResilientBackend, RetryPolicy, Throttle, ThrottleConfig};
use super::{Backend, BackendError, BackendFactory, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provider {
    pub name: &'static str,
    pub api_key_env: &'static str,
    pub base_url: Option<&'static str>,
}

pub const PROVIDERS: &[Provider] = &[
    Provider { name: "anthropic", api_key_env: "ANTHROPIC_API_KEY", base_url: Some("https://api.anthropic.com/v1") },
    Provider { name: "xai", api_key_env: "XAI_API_KEY", base_url: Some("https://api.x.ai/v1") },
    Provider { name: "openai", api_key_env: "OPENAI_API_KEY", base_url: Some("https://api.openai.com/v1") },
    Provider { name: "mistral", api_key_env: "MISTRAL_API_KEY", base_url: Some("https://api.mistral.ai/v1") },
    Provider { name: "together", api_key_env: "TOGETHER_API_KEY", base_url: Some("https://api.together.xyz/v1") },
    Provider {
        name: "dashscope",
        api_key_env: "DASHSCOPE_API_KEY",
        base_url: Some("https://dashscope-intl.aliyuncs.com/compatible-mode/v1"),
    },
    Provider {
        name: "google",
        api_key_env: "GEMINI_API_KEY",
        base_url: Some("https://generativelanguage.googleapis.com/v1beta/openai"),
    },
    Provider { name: "openrouter", api_key_env: "OPENROUTER_API_KEY", base_url: Some("https://openrouter.ai/api/v1") },
    Provider { name: "openai_compatible", api_key_env: "OPENAI_COMPATIBLE_API_KEY", base_url: None },
];

/// Unknown provider names fall back to the generic OpenAI-compatible entry,
/// which then needs a `base_url`.
pub fn provider(name: &str) -> Provider {
    PROVIDERS.iter().copied().find(|p| p.name == name).unwrap_or(PROVIDERS[PROVIDERS.len() - 1])
}

/// The seven-model lineup used by the cross-model experiment.
pub fn default_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new("anthropic", "claude-3-7-sonnet-20250219").with_label("claude-3.7-sonnet"),
        ModelSpec::new("xai", "grok-2-1212").with_label("grok-2-1212"),
        ModelSpec::new("openai", "gpt-4o-mini").with_label("gpt-4o-mini"),
        ModelSpec::new("mistral", "mistral-small-2501").with_label("mistral-small-24b"),
        ModelSpec::new("together", "meta-llama/Meta-Llama-3.1-70B-Instruct-Turbo").with_label("llama-3.1-70b"),
        ModelSpec::new("dashscope", "qwen2.5-72b-instruct").with_label("qwen-2.5-72b"),
        ModelSpec::new("google", "gemini-2.0-flash").with_label("gemini-2.0-flash"),
    ]
}

type EnvLookup = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;

struct ResolvedModel {
    base_url: String,
    api_key: String,
    provider: String,
}

pub struct LiveFactory {
    resolved: HashMap<String, ResolvedModel>,
    throttles: Mutex<HashMap<String, Arc<Throttle>>>,
    throttle_config: ThrottleConfig,
    policy: RetryPolicy,
}

impl LiveFactory {
    /// Resolves endpoints and credentials for every model up front; a missing
    /// key is a config error here rather than a failure mid-run.
    pub fn new(models: &[ModelSpec], throttle: ThrottleConfig, policy: RetryPolicy) -> Result<Self, BackendError> {
        Self::with_env(models, throttle, policy, Arc::new(|k| std::env::var(k).ok()))
    }

    pub fn with_env(
        models: &[ModelSpec],
        throttle_config: ThrottleConfig,
        policy: RetryPolicy,
        env: EnvLookup,
    ) -> Result<Self, BackendError> {
        let mut resolved = HashMap::new();
        for spec in models {
            spec.validate()?;
            let p = provider(&spec.provider);
            let base_url = spec.base_url.clone().or_else(|| p.base_url.map(str::to_string)).ok_or_else(|| {
                BackendError::Config(format!(
                    "model {} uses provider {:?} which needs a base_url",
                    spec.id(),
                    spec.provider
                ))
            })?;
            let key_var = spec.api_key_env.as_deref().unwrap_or(p.api_key_env);
            let api_key = env(key_var).filter(|k| !k.trim().is_empty()).ok_or_else(|| {
                BackendError::Config(format!("model {} needs the {key_var} environment variable", spec.id()))
            })?;
            resolved
                .insert(spec.model_name.clone(), ResolvedModel { base_url, api_key, provider: spec.provider.clone() });
        }
        Ok(Self { resolved, throttles: Mutex::new(HashMap::new()), throttle_config, policy })
    }

    fn throttle(&self, provider: &str) -> Arc<Throttle> {
        self.throttles
            .lock()
            .expect("throttle map")
            .entry(provider.to_string())
            .or_insert_with(|| Arc::new(Throttle::new(self.throttle_config)))
            .clone()
    }
}

impl BackendFactory for LiveFactory {
    fn create(&self, spec: &ModelSpec) -> Result<Arc<dyn Backend>, BackendError> {
        let r = self.resolved.get(&spec.model_name).ok_or_else(|| {
            BackendError::Config(format!("model {} was not declared when the factory was built", spec.id()))
        })?;
        let transport = OpenAiCompatTransport::new(&r.base_url, &r.api_key, spec);
        Ok(Arc::new(ResilientBackend::new(spec.clone(), transport, self.policy, self.throttle(&r.provider))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_fails_at_construction() {
        let env: EnvLookup = Arc::new(|_| None);
        let err = LiveFactory::with_env(&default_models(), ThrottleConfig::default(), RetryPolicy::default(), env)
            .err()
            .unwrap();
        match err {
            BackendError::Config(msg) => assert!(msg.contains("ANTHROPIC_API_KEY"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_keys_present_builds() {
        let env: EnvLookup = Arc::new(|_| Some("k".into()));
        let f =
            LiveFactory::with_env(&default_models(), ThrottleConfig::default(), RetryPolicy::default(), env).unwrap();
        assert!(f.create(&default_models()[0]).is_ok());
        assert!(f.create(&ModelSpec::new("openai", "other")).is_err());
    }

    #[test]
    fn generic_provider_needs_base_url() {
        let env: EnvLookup = Arc::new(|_| Some("k".into()));
        let spec = ModelSpec::new("my-vllm", "local-model");
        assert!(LiveFactory::with_env(
            std::slice::from_ref(&spec),
            ThrottleConfig::default(),
            RetryPolicy::default(),
            env.clone()
        )
        .is_err());
        let spec = ModelSpec { base_url: Some("http://localhost:8000/v1".into()), ..spec };
        assert!(LiveFactory::with_env(&[spec], ThrottleConfig::default(), RetryPolicy::default(), env).is_ok());
    }

    #[test]
    fn seven_default_models() {
        let models = default_models();
        assert_eq!(models.len(), 7);
        assert!(models.iter().all(|m| provider(&m.provider).name == m.provider));
    }
}
