//! Clients for OpenAI-compatible chat-completion and embedding endpoints.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::embedding::{EmbeddingConfig, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::orchestration::{BackendConfig, BackendError, ModelBackend};

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .build()
        .into()
}

fn token(env: Option<&str>) -> Result<Option<String>, String> {
    match env {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| format!("environment variable {name} is not set")),
    }
}

fn post(agent: &ureq::Agent, url: &str, token: Option<&str>, body: serde_json::Value) -> Result<serde_json::Value, ureq::Error> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(t) = token {
        req = req.header("Authorization", format!("Bearer {t}"));
    }
    req.send_json(body)?.body_mut().read_json()
}

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    id: String,
    temperature: f64,
    token: Option<String>,
    timeout_secs: u64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl HttpBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let base = cfg
            .base_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("http backend needs base_url".into()))?;
        let model = cfg
            .model
            .clone()
            .ok_or_else(|| BackendError::Config("http backend needs model".into()))?;
        Ok(Self {
            agent: agent(cfg.timeout_secs),
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            id: format!("http:{model}"),
            model,
            temperature: cfg.temperature,
            token: token(cfg.token_env.as_deref()).map_err(BackendError::Config)?,
            timeout_secs: cfg.timeout_secs,
        })
    }
}

impl ModelBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value = post(&self.agent, &self.url, self.token.as_deref(), body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout_secs),
            other => BackendError::Transport(other.to_string()),
        })?;
        let reply: ChatResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Transport(format!("unexpected reply: {e}")))?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("reply has no message content".into()))
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}

pub struct HttpEmbedder {
    agent: ureq::Agent,
    url: String,
    model_id: String,
    dim: usize,
    token: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn from_config(cfg: &EmbeddingConfig) -> Result<Self, EmbeddingError> {
        let url = cfg
            .endpoint
            .clone()
            .ok_or_else(|| EmbeddingError::Provider("http embedder needs endpoint".into()))?;
        let model_id = cfg
            .model_id
            .clone()
            .ok_or_else(|| EmbeddingError::Provider("http embedder needs model_id".into()))?;
        Ok(Self {
            agent: agent(cfg.timeout_secs),
            url,
            model_id,
            dim: cfg.dim,
            token: token(cfg.token_env.as_deref()).map_err(EmbeddingError::Provider)?,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let body = json!({"model": self.model_id, "input": texts});
        let value = post(&self.agent, &self.url, self.token.as_deref(), body)
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        let reply: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| EmbeddingError::Provider(format!("unexpected reply: {e}")))?;
        if reply.data.len() != texts.len() {
            return Err(EmbeddingError::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                reply.data.len()
            )));
        }
        reply
            .data
            .into_iter()
            .map(|item| {
                if item.embedding.len() != self.dim {
                    return Err(EmbeddingError::DimensionMismatch(self.dim, item.embedding.len()));
                }
                EmbeddingVector::new(item.embedding)
            })
            .collect()
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
