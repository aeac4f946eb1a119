//! Chat-completion HTTP backend.
//!
//! Sends `{"model", "temperature": 0.0, "messages": [{"role": "user",
//! "content": prompt}]}` and reads `choices[0].message.content`. The API key
//! comes from an environment variable; it is never logged.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{BackendError, CompletionBackend, PredictorConfig};

pub struct ChatBackend {
    agent: Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl ChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        }
    }

    /// Builds the backend from a predictor config, reading the key from
    /// `config.api_key_env` if that variable is set.
    pub fn from_config(config: &PredictorConfig) -> Result<Self, BackendError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::Transport("chat backend needs an endpoint".into()))?;
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{} is not set; sending requests without an API key", config.api_key_env);
        }
        Ok(Self::new(endpoint, config.model.clone(), key))
    }
}

impl CompletionBackend for ChatBackend {
    fn name(&self) -> &str {
        "chat"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "temperature": 0.0,
            "messages": [{"role": "user", "content": prompt}],
        });
        log::trace!(
            "POST {} authorization={} body={}",
            self.endpoint,
            if self.api_key.is_some() { "Bearer <redacted>" } else { "<none>" },
            body
        );
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Response(e.to_string()))?;
        log::trace!("response body={value}");
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Response("missing choices[0].message.content".into()))
    }
}
