use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::fixture::{read_vector_file, record_key, Manifest};
use super::http::{merge_object, JsonClient};
use super::{ProviderConfig, ProviderError};
use crate::geometry::{normalize, Embedding};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub text: String,
    /// Task instruction for instruction-tuned embedders.
    pub instruction: Option<String>,
}

impl EmbeddingRequest {
    pub fn new(text: impl Into<String>, instruction: Option<&str>) -> Self {
        Self {
            text: text.into(),
            instruction: instruction.filter(|i| !i.is_empty()).map(str::to_string),
        }
    }
}

/// Task instructions sent with each kind of text. Instruction-tuned
/// embedders condition the vector on them; plain embedders ignore them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleInstructions {
    pub response: Option<String>,
    pub group: Option<String>,
    pub word: Option<String>,
}

impl Default for RoleInstructions {
    fn default() -> Self {
        Self {
            response: Some("Represent the sentence for classifying its social bias:".into()),
            group: Some("Represent the demographic group description for classifying social bias:".into()),
            word: Some("Represent the characteristic for classifying social bias:".into()),
        }
    }
}

impl RoleInstructions {
    pub fn none() -> Self {
        Self { response: None, group: None, word: None }
    }
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;

    /// Declared output dimension, when known ahead of the first call.
    fn dim(&self) -> Option<usize>;

    /// One vector per request, in request order.
    fn embed(&self, requests: &[EmbeddingRequest]) -> Result<Vec<Embedding>, ProviderError>;

    fn embed_one(&self, request: EmbeddingRequest) -> Result<Embedding, ProviderError> {
        let mut out = self.embed(std::slice::from_ref(&request))?;
        out.pop().ok_or_else(|| ProviderError::Malformed {
            provider: self.model_id().to_string(),
            message: "no vector returned".into(),
        })
    }
}

pub(crate) fn check_requests(requests: &[EmbeddingRequest]) -> Result<(), ProviderError> {
    match requests.iter().position(|r| r.text.is_empty()) {
        Some(index) => Err(ProviderError::EmptyText { index }),
        None => Ok(()),
    }
}

/// Serves vectors from a fixture file. Unknown texts are hard errors.
#[derive(Debug)]
pub struct FixtureEmbedder {
    manifest: Manifest,
    vectors: HashMap<String, Embedding>,
}

impl FixtureEmbedder {
    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let file = read_vector_file(path, true)?;
        let mut vectors = HashMap::with_capacity(file.records.len());
        for r in file.records {
            let v = Embedding::new(r.vector).map_err(|e| ProviderError::file(path, e))?;
            vectors.insert(r.key, v);
        }
        Ok(Self { manifest: file.manifest, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Embedder for FixtureEmbedder {
    fn model_id(&self) -> &str {
        &self.manifest.model_id
    }

    fn dim(&self) -> Option<usize> {
        Some(self.manifest.dim)
    }

    fn embed(&self, requests: &[EmbeddingRequest]) -> Result<Vec<Embedding>, ProviderError> {
        check_requests(requests)?;
        requests
            .iter()
            .map(|r| {
                let key = record_key(&self.manifest.model_id, r.instruction.as_deref(), &r.text);
                self.vectors.get(&key).cloned().ok_or_else(|| ProviderError::FixtureMiss {
                    text: r.text.clone(),
                    instruction: r.instruction.clone(),
                })
            })
            .collect()
    }
}

/// Deterministic unit vectors derived from a seeded hash of
/// `(instruction, text)`. Geometrically meaningless; for hermetic tests.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    model_id: String,
    dim: usize,
    seed: u64,
}

impl SyntheticEmbedder {
    pub fn new(model_id: impl Into<String>, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "synthetic embedder needs a positive dimension");
        Self { model_id: model_id.into(), dim, seed }
    }

    fn vector(&self, request: &EmbeddingRequest) -> Embedding {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(request.instruction.as_deref().unwrap_or("").as_bytes());
        h.update([0u8]);
        h.update(request.text.as_bytes());
        let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
        loop {
            let raw: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(unit) = Embedding::new(raw).and_then(|v| normalize(&v)) {
                return unit;
            }
        }
    }
}

impl Embedder for SyntheticEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, requests: &[EmbeddingRequest]) -> Result<Vec<Embedding>, ProviderError> {
        check_requests(requests)?;
        Ok(requests.iter().map(|r| self.vector(r)).collect())
    }
}

/// How the task instruction is transmitted to an HTTP embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionMode {
    /// `"<instruction> <text>"` in the input field.
    #[default]
    Prefix,
    /// `[instruction, text]` pairs in the input field.
    Pair,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpEmbeddingConfig {
    #[serde(flatten)]
    pub connection: ProviderConfig,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_input_field")]
    pub input_field: String,
    /// JSON pointer to the array of result items.
    #[serde(default = "default_data_pointer")]
    pub data_pointer: String,
    /// Field of each item holding the vector; empty when items are bare arrays.
    #[serde(default = "default_vector_field")]
    pub vector_field: String,
    #[serde(default)]
    pub instruction_mode: InstructionMode,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub extra_body: Option<Value>,
}

fn default_input_field() -> String {
    "input".into()
}
fn default_data_pointer() -> String {
    "/data".into()
}
fn default_vector_field() -> String {
    "embedding".into()
}
fn default_batch() -> usize {
    32
}

impl HttpEmbeddingConfig {
    pub fn new(connection: ProviderConfig) -> Self {
        Self {
            connection,
            dim: None,
            input_field: default_input_field(),
            data_pointer: default_data_pointer(),
            vector_field: default_vector_field(),
            instruction_mode: InstructionMode::default(),
            batch_size: default_batch(),
            extra_body: None,
        }
    }
}

/// Embedding client for hosted APIs (OpenAI-style `{"data":[{"embedding":[..]}]}`
/// by default; field names configurable).
pub struct HttpEmbedder {
    config: HttpEmbeddingConfig,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbeddingConfig) -> Self {
        let client = JsonClient::new(
            format!("embedding:{}", config.connection.model_id),
            config.connection.clone(),
        );
        Self { config, client }
    }

    fn body(&self, chunk: &[EmbeddingRequest]) -> Value {
        let inputs: Vec<Value> = chunk
            .iter()
            .map(|r| match (self.config.instruction_mode, &r.instruction) {
                (InstructionMode::Prefix, Some(i)) => json!(format!("{i} {}", r.text)),
                (InstructionMode::Pair, Some(i)) => json!([i, r.text]),
                (InstructionMode::Pair, None) => json!(["", r.text]),
                _ => json!(r.text),
            })
            .collect();
        let mut body = json!({ "model": self.config.connection.model_id });
        body[self.config.input_field.as_str()] = Value::Array(inputs);
        if let Some(extra) = &self.config.extra_body {
            merge_object(&mut body, extra);
        }
        body
    }

    fn parse(&self, resp: &Value, expected: usize) -> Result<Vec<Embedding>, ProviderError> {
        let items = resp
            .pointer(&self.config.data_pointer)
            .and_then(Value::as_array)
            .ok_or_else(|| self.client.malformed(format!("no array at {}", self.config.data_pointer)))?;
        if items.len() != expected {
            return Err(self.client.malformed(format!(
                "expected {expected} vectors, got {}",
                items.len()
            )));
        }
        items
            .iter()
            .map(|item| {
                let raw = if self.config.vector_field.is_empty() {
                    item
                } else {
                    item.get(&self.config.vector_field).unwrap_or(&Value::Null)
                };
                let comps: Vec<f64> = serde_json::from_value(raw.clone())
                    .map_err(|e| self.client.malformed(format!("bad vector: {e}")))?;
                if let Some(dim) = self.config.dim {
                    if comps.len() != dim {
                        return Err(ProviderError::DimensionMismatch {
                            expected: dim,
                            actual: comps.len(),
                        });
                    }
                }
                Embedding::new(comps).map_err(|e| self.client.malformed(e))
            })
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.config.connection.model_id
    }

    fn dim(&self) -> Option<usize> {
        self.config.dim
    }

    fn embed(&self, requests: &[EmbeddingRequest]) -> Result<Vec<Embedding>, ProviderError> {
        check_requests(requests)?;
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(self.config.batch_size.max(1)) {
            let resp = self.client.post(&self.body(chunk))?;
            out.extend(self.parse(&resp, chunk.len())?);
        }
        Ok(out)
    }
}
