//! Text embeddings and cosine similarity.
//!
//! [`HashEmbedder`] is the default offline provider: lowercase, strip
//! punctuation, hash each token into one of `dim` buckets, L2-normalize.
//! Model-backed providers implement the same [`EmbeddingProvider`] trait.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 256;
pub const MIN_HASH_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension must be at least {MIN_HASH_DIM}, got {0}")]
    BadDimension(usize),
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::BadDimension(0));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// A source of text embeddings. Implementations must return identical
/// vectors for identical inputs and a single dimension for all outputs.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;

    fn model_id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut out = self.embed(&[text])?;
        out.pop().ok_or_else(|| EmbeddingError::Provider("provider returned no vectors".into()))
    }

    /// Cosine similarity between two texts under this provider.
    fn similarity(&self, a: &str, b: &str) -> Result<f64, EmbeddingError> {
        let v = self.embed(&[a, b])?;
        cosine_similarity(&v[0], &v[1])
    }
}

/// Lowercased, punctuation-stripped word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Token-hashing embedding into `dim` buckets, L2-normalized.
pub fn deterministic_embed(text: &str, dim: usize) -> Result<EmbeddingVector, EmbeddingError> {
    if dim < MIN_HASH_DIM {
        return Err(EmbeddingError::BadDimension(dim));
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    let mut values = vec![0.0; dim];
    for token in &tokens {
        values[(fnv1a(token.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(EmbeddingVector(values))
}

/// Offline provider backed by [`deterministic_embed`].
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    model_id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim < MIN_HASH_DIM {
            return Err(EmbeddingError::BadDimension(dim));
        }
        Ok(Self {
            dim,
            model_id: format!("hash-fnv1a-{dim}"),
        })
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM).expect("default dimension is valid")
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        texts.iter().map(|t| deterministic_embed(t, self.dim)).collect()
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Hash,
    Http,
}

/// Embedding provider settings as they appear in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_id: Option<String>,
    pub dim: usize,
    pub timeout_secs: u64,
    pub token_env: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Hash,
            endpoint: None,
            model_id: None,
            dim: DEFAULT_DIM,
            timeout_secs: 60,
            token_env: None,
        }
    }
}

impl EmbeddingConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        match self.kind {
            ProviderKind::Hash => Ok(Box::new(HashEmbedder::new(self.dim)?)),
            #[cfg(feature = "http")]
            ProviderKind::Http => Ok(Box::new(crate::http::HttpEmbedder::from_config(self)?)),
            #[cfg(not(feature = "http"))]
            ProviderKind::Http => Err(EmbeddingError::Provider(
                "http embedding provider requires the `http` feature".into(),
            )),
        }
    }
}
