//! The portable embedding vector file shared by fixtures and the cache.
//!
//! Line 1 is a manifest `{"model_id": .., "dim": ..}`; every following line
//! is one record `{"key", "text", "instruction", "vector"}` with optional
//! `created_at` (unix seconds) and `checksum` fields. UTF-8, decimal numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_id: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub key: String,
    pub text: String,
    pub instruction: Option<String>,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

/// SHA-256 over `(model_id, instruction, text)`, hex encoded.
pub fn record_key(model_id: &str, instruction: Option<&str>, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update([0u8]);
    h.update(instruction.unwrap_or("").as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// Checksum binding a key to the exact bits of its vector.
pub fn vector_checksum(key: &str, vector: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(key.as_bytes());
    for c in vector {
        h.update(c.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

impl VectorRecord {
    pub fn new(manifest: &Manifest, text: &str, instruction: Option<&str>, vector: Vec<f64>) -> Self {
        let key = record_key(&manifest.model_id, instruction, text);
        Self {
            checksum: Some(vector_checksum(&key, &vector)),
            key,
            text: text.to_string(),
            instruction: instruction.map(str::to_string),
            vector,
            created_at: None,
        }
    }

    /// Checks the record against its manifest. Returns a reason on failure.
    pub fn check(&self, manifest: &Manifest) -> Result<(), String> {
        if self.text.is_empty() {
            return Err("empty text".into());
        }
        if self.vector.len() != manifest.dim {
            return Err(format!(
                "vector has {} components, manifest dim is {}",
                self.vector.len(),
                manifest.dim
            ));
        }
        if let Some(i) = self.vector.iter().position(|c| !c.is_finite()) {
            return Err(format!("component {i} is not finite"));
        }
        let expected = record_key(&manifest.model_id, self.instruction.as_deref(), &self.text);
        if self.key != expected {
            return Err("key does not match (model_id, instruction, text)".into());
        }
        if let Some(sum) = &self.checksum {
            if *sum != vector_checksum(&self.key, &self.vector) {
                return Err("checksum mismatch".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub manifest: Manifest,
    pub records: Vec<VectorRecord>,
    /// `(line number, reason)` for records skipped in lenient mode.
    pub rejected: Vec<(usize, String)>,
}

/// Reads a vector file. In strict mode any bad record is an error; otherwise
/// bad records are skipped and listed in `rejected`.
pub fn read_vector_file(path: &Path, strict: bool) -> Result<VectorFile, ProviderError> {
    let file = File::open(path).map_err(|e| ProviderError::file(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| ProviderError::file(path, "missing manifest line"))?
        .map_err(|e| ProviderError::file(path, e))?;
    let manifest: Manifest = serde_json::from_str(&first)
        .map_err(|e| ProviderError::file(path, format!("line 1: bad manifest: {e}")))?;
    if manifest.dim == 0 {
        return Err(ProviderError::file(path, "line 1: manifest dim must be positive"));
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| ProviderError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<VectorRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check(&manifest).map(|_| r));
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) if strict => {
                return Err(ProviderError::file(path, format!("line {lineno}: {reason}")))
            }
            Err(reason) => rejected.push((lineno, reason)),
        }
    }
    Ok(VectorFile { manifest, records, rejected })
}

/// Writes a vector file atomically (temporary file in the same directory,
/// then rename).
pub fn write_vector_file(
    path: &Path,
    manifest: &Manifest,
    records: &[VectorRecord],
) -> Result<(), ProviderError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| ProviderError::file(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ProviderError::file(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        let io = |e: std::io::Error| ProviderError::file(path, e);
        let ser = |e: serde_json::Error| ProviderError::file(path, e);
        serde_json::to_writer(&mut w, manifest).map_err(ser)?;
        w.write_all(b"\n").map_err(io)?;
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(ser)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    tmp.as_file().sync_all().map_err(|e| ProviderError::file(path, e))?;
    tmp.persist(path).map_err(|e| ProviderError::file(path, e.error))?;
    Ok(())
}
