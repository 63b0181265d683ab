//! External capabilities: text embedding, chat completion and text
//! classification.
//!
//! Each capability is a trait with an HTTP client, a file-backed fixture
//! implementation and (for embeddings and chat) deterministic synthetic
//! implementations for hermetic runs. Embeddings can additionally be routed
//! through a persistent on-disk cache.

pub mod cache;
pub mod chat;
pub mod classify;
pub mod embed;
pub mod fixture;
mod http;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheStats, CachedEmbedder, EmbeddingCache};
pub use chat::{ChatModel, EchoChat, HttpChat, HttpChatConfig, Message, Role, RuleChat, ScriptedChat};
pub use classify::{
    Classification, Classifier, ClassifierKind, FixtureClassifier, HttpClassifier,
    HttpClassifierConfig,
};
pub use embed::{
    Embedder, EmbeddingRequest, FixtureEmbedder, HttpEmbedder, HttpEmbeddingConfig,
    InstructionMode, RoleInstructions, SyntheticEmbedder,
};
pub use http::RetryPolicy;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("{provider}: request failed after {attempts} attempt(s): {message}")]
    Transport { provider: String, attempts: u32, message: String },
    #[error("{provider}: HTTP {status}: {body}")]
    Status { provider: String, status: u16, body: String },
    #[error("{provider}: malformed response: {message}")]
    Malformed { provider: String, message: String },
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("embedding request {index} has empty text")]
    EmptyText { index: usize },
    #[error("no embedding fixture for text {text:?} (instruction {instruction:?})")]
    FixtureMiss { text: String, instruction: Option<String> },
    #[error("no {kind} fixture for text {text:?}")]
    ClassifierMiss { kind: ClassifierKind, text: String },
    #[error("{kind} classifier returned unknown label {label:?}")]
    UnknownLabel { kind: ClassifierKind, label: String },
    #[error("{kind} classification is not configured")]
    Unsupported { kind: ClassifierKind },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("scripted chat model has no replies left")]
    ScriptExhausted,
    #[error("no chat rule matches the prompt {0:?}")]
    NoRule(String),
    #[error("message list is empty")]
    EmptyMessages,
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

impl ProviderError {
    pub(crate) fn file(path: &Path, message: impl ToString) -> Self {
        ProviderError::File { path: path.to_path_buf(), message: message.to_string() }
    }
}

/// Connection settings shared by the HTTP clients. The credential itself is
/// never stored; only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    pub model_id: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent_requests: usize,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_delay_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_concurrent() -> usize {
    4
}
fn default_retry_base_ms() -> u64 {
    500
}

impl ProviderConfig {
    pub fn new(endpoint_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            auth_env_var: None,
            model_id: model_id.into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            max_concurrent_requests: default_max_concurrent(),
            retry_base_delay_ms: default_retry_base_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint_url.is_empty() {
            return Err("endpoint_url is empty".into());
        }
        if !(self.endpoint_url.starts_with("http://") || self.endpoint_url.starts_with("https://")) {
            return Err(format!("endpoint_url {:?} is not an http(s) URL", self.endpoint_url));
        }
        if self.timeout_ms == 0 {
            return Err("timeout_ms must be positive".into());
        }
        if self.max_concurrent_requests == 0 {
            return Err("max_concurrent_requests must be positive".into());
        }
        if self.max_retries > 10 {
            return Err("max_retries must be at most 10".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingProviderSpec {
    Http(HttpEmbeddingConfig),
    Fixture { path: PathBuf },
    Synthetic {
        model_id: String,
        dim: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChatProviderSpec {
    Http(HttpChatConfig),
    Rules { path: PathBuf },
    Echo,
    Scripted { replies: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierProviderSpec {
    Http(HttpClassifierConfig),
    Fixture { path: PathBuf },
}

impl EmbeddingProviderSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Http(cfg) => cfg.connection.validate(),
            Self::Fixture { path } => existing_file(path),
            Self::Synthetic { dim, .. } if *dim == 0 => Err("synthetic dim must be positive".into()),
            Self::Synthetic { .. } => Ok(()),
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Self::Fixture { path } = self {
            *path = base.join(&*path);
        }
    }
}

impl ChatProviderSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Http(cfg) => cfg.connection.validate(),
            Self::Rules { path } => existing_file(path),
            Self::Echo | Self::Scripted { .. } => Ok(()),
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Self::Rules { path } = self {
            *path = base.join(&*path);
        }
    }
}

impl ClassifierProviderSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Http(cfg) => cfg.validate(),
            Self::Fixture { path } => existing_file(path),
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Self::Fixture { path } = self {
            *path = base.join(&*path);
        }
    }
}

fn existing_file(path: &Path) -> Result<(), String> {
    if path.is_file() {
        Ok(())
    } else {
        Err(format!("{} does not exist", path.display()))
    }
}

/// Builds an embedder. `default_seed` applies to synthetic providers that do
/// not pin their own seed.
pub fn build_embedder(
    spec: &EmbeddingProviderSpec,
    default_seed: u64,
) -> Result<Arc<dyn Embedder>, ProviderError> {
    Ok(match spec {
        EmbeddingProviderSpec::Http(cfg) => Arc::new(HttpEmbedder::new(cfg.clone())),
        EmbeddingProviderSpec::Fixture { path } => Arc::new(FixtureEmbedder::open(path)?),
        EmbeddingProviderSpec::Synthetic { model_id, dim, seed } => {
            Arc::new(SyntheticEmbedder::new(model_id.clone(), *dim, seed.unwrap_or(default_seed)))
        }
    })
}

pub fn build_chat(spec: &ChatProviderSpec) -> Result<Arc<dyn ChatModel>, ProviderError> {
    Ok(match spec {
        ChatProviderSpec::Http(cfg) => Arc::new(HttpChat::new(cfg.clone())),
        ChatProviderSpec::Rules { path } => Arc::new(RuleChat::open(path)?),
        ChatProviderSpec::Echo => Arc::new(EchoChat),
        ChatProviderSpec::Scripted { replies } => Arc::new(ScriptedChat::new(replies.clone())),
    })
}

pub fn build_classifier(
    spec: &ClassifierProviderSpec,
) -> Result<Arc<dyn Classifier>, ProviderError> {
    Ok(match spec {
        ClassifierProviderSpec::Http(cfg) => Arc::new(HttpClassifier::new(cfg.clone())),
        ClassifierProviderSpec::Fixture { path } => Arc::new(FixtureClassifier::open(path)?),
    })
}
