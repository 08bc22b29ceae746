//! Clients for instruction-tuned and embedding endpoints.
//!
//! Relations go through a chat-completions style POST
//! (`model`, `messages`, `temperature`, `max_tokens`) with greedy decoding;
//! embeddings through a POST of `{"model", "input"}` that answers with either
//! `{"embedding": [...]}` or `{"data": [{"embedding": [...]}]}`.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{normalize_output, Embedding, ProviderError, RelationProvider, RelationText, TextEncoder};

pub const ENV_ENDPOINT_URL: &str = "LCV_ENDPOINT_URL";
pub const ENV_ENDPOINT_KEY: &str = "LCV_ENDPOINT_KEY";
pub const ENV_ENDPOINT_MODEL: &str = "LCV_ENDPOINT_MODEL";

pub const MAX_NEW_TOKENS: u32 = 16;

/// Prompt for `PROMPT_VERSION` "v1". Changing the text requires a new version
/// so stale cache entries stop matching.
pub const PROMPT_TEMPLATE: &str = "You compare a TARGET SENTENCE with a CONTEXT ARTICLE. Output exactly one short phrase (at most 12 words) stating one fact present in the CONTEXT ARTICLE but absent from the TARGET SENTENCE. If no such fact exists, output exactly [NO_MISSING_CONTEXT]. TARGET SENTENCE: {s} CONTEXT ARTICLE: {c}";

pub fn render_prompt(sentence: &str, article: &str) -> String {
    let (head, rest) = PROMPT_TEMPLATE.split_once("{s}").expect("template has a sentence slot");
    let (middle, tail) = rest.split_once("{c}").expect("template has an article slot");
    format!("{head}{sentence}{middle}{article}{tail}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { url: url.into(), key: None, model: model.into(), timeout: Duration::from_secs(60) }
    }

    /// Reads `LCV_ENDPOINT_URL`, `LCV_ENDPOINT_KEY` and `LCV_ENDPOINT_MODEL`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(ENV_ENDPOINT_URL).map_err(|_| ProviderError::Config(format!("{ENV_ENDPOINT_URL} is not set")))?;
        let model = std::env::var(ENV_ENDPOINT_MODEL).unwrap_or_else(|_| "default".to_string());
        let key = std::env::var(ENV_ENDPOINT_KEY).ok().filter(|k| !k.is_empty());
        Ok(Self { key, ..Self::new(url, model) })
    }

    fn agent(&self) -> Agent {
        Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn post(&self, agent: &Agent, body: &Value) -> Result<Value, ProviderError> {
        let mut request = agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Endpoint { status, body });
        }
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))
    }
}

/// Relation generator backed by a chat-completions endpoint.
pub struct RemoteRelationProvider {
    config: EndpointConfig,
    agent: Agent,
}

impl RemoteRelationProvider {
    pub const ID: &'static str = "remote";

    pub fn new(config: EndpointConfig) -> Self {
        let agent = config.agent();
        Self { config, agent }
    }

    pub fn request_body(&self, sentence: &str, article: &str) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": render_prompt(sentence, article)}],
            "temperature": 0,
            "max_tokens": MAX_NEW_TOKENS,
        })
    }
}

impl RelationProvider for RemoteRelationProvider {
    fn id(&self) -> &str {
        Self::ID
    }

    fn generate(&self, sentence: &str, article: &str) -> Result<RelationText, ProviderError> {
        let reply = self.config.post(&self.agent, &self.request_body(sentence, article))?;
        let content = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))?;
        Ok(normalize_output(content))
    }
}

/// Text encoder backed by an embeddings endpoint.
pub struct RemoteEncoder {
    config: EndpointConfig,
    agent: Agent,
    dim: usize,
    id: String,
}

impl RemoteEncoder {
    pub fn new(config: EndpointConfig, dim: usize) -> Self {
        let agent = config.agent();
        let id = format!("remote:{}", config.model);
        Self { config, agent, dim, id }
    }
}

impl TextEncoder for RemoteEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let reply = self.config.post(&self.agent, &json!({"model": self.config.model, "input": text}))?;
        let raw = reply
            .get("embedding")
            .or_else(|| reply.pointer("/data/0/embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::BadResponse("no embedding array in response".into()))?;
        let values: Vec<f64> = raw
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| ProviderError::BadResponse("non-numeric embedding entry".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != self.dim {
            return Err(ProviderError::DimensionMismatch { expected: self.dim, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::NonFinite);
        }
        Ok(Embedding { values, source: self.id.clone() })
    }
}
