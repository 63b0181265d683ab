//! Persistent embedding cache keyed by `(model_id, instruction, text)`.
//!
//! The on-disk format is the portable vector file (see [`super::fixture`]).
//! Readers run concurrently; writers are serialized and every flush
//! replaces the file atomically. Records failing their checksum on load are
//! reported and dropped.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::embed::{check_requests, Embedder, EmbeddingRequest};
use super::fixture::{read_vector_file, record_key, write_vector_file, Manifest, VectorRecord};
use super::ProviderError;
use crate::geometry::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheStats {
    pub path: PathBuf,
    pub model_id: String,
    pub dim: usize,
    pub records: usize,
    pub rejected_on_load: usize,
    pub file_bytes: u64,
}

struct Store {
    order: Vec<VectorRecord>,
    index: HashMap<String, usize>,
}

pub struct EmbeddingCache {
    path: PathBuf,
    manifest: Manifest,
    store: RwLock<Store>,
    write_lock: Mutex<()>,
    rejected_on_load: usize,
}

impl EmbeddingCache {
    /// Opens (or creates) the cache at `path` for the given model. A cache
    /// written for another model or dimension is an error; an unreadable
    /// file is moved aside to `<path>.corrupt` and replaced.
    pub fn open(path: &Path, model_id: &str, dim: usize) -> Result<Self, ProviderError> {
        let manifest = Manifest { model_id: model_id.to_string(), dim };
        let mut rejected_on_load = 0;
        let mut order = Vec::new();
        if path.exists() {
            match read_vector_file(path, false) {
                Ok(file) => {
                    if file.manifest != manifest {
                        return Err(ProviderError::file(
                            path,
                            format!(
                                "cache belongs to model {:?} (dim {}), not {:?} (dim {})",
                                file.manifest.model_id, file.manifest.dim, model_id, dim
                            ),
                        ));
                    }
                    for (line, reason) in &file.rejected {
                        log::warn!("{}: line {line}: dropping corrupt cache record: {reason}", path.display());
                    }
                    rejected_on_load = file.rejected.len();
                    order = file.records;
                }
                Err(e) => {
                    let aside = path.with_extension("corrupt");
                    log::warn!("{e}; moving unreadable cache to {}", aside.display());
                    std::fs::rename(path, &aside).map_err(|e| ProviderError::file(path, e))?;
                }
            }
        }
        let mut index = HashMap::with_capacity(order.len());
        let mut deduped = Vec::with_capacity(order.len());
        for r in order {
            if let Some(&i) = index.get(&r.key) {
                deduped[i] = r;
            } else {
                index.insert(r.key.clone(), deduped.len());
                deduped.push(r);
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            manifest,
            store: RwLock::new(Store { order: deduped, index }),
            write_lock: Mutex::new(()),
            rejected_on_load,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.store.read().unwrap_or_else(|e| e.into_inner()).order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, request: &EmbeddingRequest) -> Option<Embedding> {
        let key = record_key(&self.manifest.model_id, request.instruction.as_deref(), &request.text);
        let store = self.store.read().unwrap_or_else(|e| e.into_inner());
        let rec = &store.order[*store.index.get(&key)?];
        Embedding::new(rec.vector.clone()).ok()
    }

    /// Inserts vectors and flushes the file.
    pub fn insert_all(&self, items: &[(EmbeddingRequest, Embedding)]) -> Result<(), ProviderError> {
        if items.is_empty() {
            return Ok(());
        }
        for (_, v) in items {
            if v.dim() != self.manifest.dim {
                return Err(ProviderError::DimensionMismatch {
                    expected: self.manifest.dim,
                    actual: v.dim(),
                });
            }
        }
        let _w = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).ok();
        let snapshot = {
            let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
            for (req, v) in items {
                let mut rec = VectorRecord::new(
                    &self.manifest,
                    &req.text,
                    req.instruction.as_deref(),
                    v.as_slice().to_vec(),
                );
                rec.created_at = now;
                match store.index.get(&rec.key).copied() {
                    Some(i) => store.order[i] = rec,
                    None => {
                        let i = store.order.len();
                        store.index.insert(rec.key.clone(), i);
                        store.order.push(rec);
                    }
                }
            }
            store.order.clone()
        };
        write_vector_file(&self.path, &self.manifest, &snapshot)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            path: self.path.clone(),
            model_id: self.manifest.model_id.clone(),
            dim: self.manifest.dim,
            records: self.len(),
            rejected_on_load: self.rejected_on_load,
            file_bytes: std::fs::metadata(&self.path).map(|m| m.len()).unwrap_or(0),
        }
    }

    /// Removes every record and the backing file.
    pub fn clear(&self) -> Result<(), ProviderError> {
        let _w = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
        store.order.clear();
        store.index.clear();
        match std::fs::remove_file(&self.path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(ProviderError::file(&self.path, e)),
        }
    }
}

/// Wraps an embedder so that cached vectors are served without a call to
/// the inner provider and new vectors are persisted.
pub struct CachedEmbedder {
    inner: Arc<dyn Embedder>,
    cache: Arc<EmbeddingCache>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, cache: Arc<EmbeddingCache>) -> Result<Self, ProviderError> {
        if inner.model_id() != cache.manifest().model_id {
            return Err(ProviderError::file(
                &cache.path,
                format!("cache model {:?} differs from provider model {:?}", cache.manifest().model_id, inner.model_id()),
            ));
        }
        if let Some(dim) = inner.dim() {
            if dim != cache.manifest().dim {
                return Err(ProviderError::DimensionMismatch { expected: cache.manifest().dim, actual: dim });
            }
        }
        Ok(Self { inner, cache })
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl Embedder for CachedEmbedder {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dim(&self) -> Option<usize> {
        Some(self.cache.manifest().dim)
    }

    fn embed(&self, requests: &[EmbeddingRequest]) -> Result<Vec<Embedding>, ProviderError> {
        check_requests(requests)?;
        let mut out: Vec<Option<Embedding>> = requests.iter().map(|r| self.cache.get(r)).collect();
        let mut miss_idx = Vec::new();
        let mut misses: Vec<EmbeddingRequest> = Vec::new();
        for (i, slot) in out.iter().enumerate() {
            if slot.is_none() {
                // duplicates inside one batch are fetched once
                if let Some(j) = misses.iter().position(|m| *m == requests[i]) {
                    miss_idx.push((i, j));
                } else {
                    miss_idx.push((i, misses.len()));
                    misses.push(requests[i].clone());
                }
            }
        }
        if !misses.is_empty() {
            let fresh = self.inner.embed(&misses)?;
            if fresh.len() != misses.len() {
                return Err(ProviderError::Malformed {
                    provider: self.inner.model_id().to_string(),
                    message: format!("expected {} vectors, got {}", misses.len(), fresh.len()),
                });
            }
            let pairs: Vec<_> = misses.into_iter().zip(fresh.iter().cloned()).collect();
            self.cache.insert_all(&pairs)?;
            for (i, j) in miss_idx {
                out[i] = Some(fresh[j].clone());
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}
