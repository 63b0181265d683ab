//! Sensitive attributes, their demographic groups and the per-group
//! pleasant/unpleasant word sets, each word embedded inside a short carrier
//! sentence.
//!
//! A lexicon is loaded from a single JSON document:
//!
//! ```json
//! {
//!   "embedding_model_id": "...", "dim": 3, "template": "This is {}",
//!   "attributes": [{"name": "gender", "groups": [{"id": "male", "surface_text": "...", "vector": [..]}]}],
//!   "entries": [{"word": "kind", "group_id": "male", "polarity": "pleasant", "vector": [..]}]
//! }
//! ```
//!
//! Vectors may be omitted only when loading with an embedder
//! ([`load_lexicon_with`]).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Embedding;
use crate::providers::{Embedder, EmbeddingRequest, ProviderError, RoleInstructions};

pub const PLACEHOLDER: &str = "{}";
pub const DEFAULT_TEMPLATE: &str = "This is {}";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pleasant,
    Unpleasant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("template {template:?} must contain exactly one {PLACEHOLDER} placeholder (found {found})")]
    Template { template: String, found: usize },
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: {} violation(s):\n{}", .violations.len(), render(.violations))]
    Invalid { path: PathBuf, violations: Vec<Violation> },
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("embedding lexicon texts: {0}")]
    Provider(#[from] ProviderError),
}

fn render(violations: &[Violation]) -> String {
    violations.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

/// Places `word` into the carrier sentence `template`.
pub fn contextualize(word: &str, template: &str) -> Result<String, LexiconError> {
    let found = template.matches(PLACEHOLDER).count();
    if found != 1 {
        return Err(LexiconError::Template { template: template.to_string(), found });
    }
    Ok(template.replacen(PLACEHOLDER, word, 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemographicGroup {
    pub id: String,
    pub surface_text: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveAttribute {
    pub name: String,
    pub groups: Vec<DemographicGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub word: String,
    pub contextualized_text: String,
    pub polarity: Polarity,
    pub group_id: String,
    pub embedding: Embedding,
}

/// Validated, immutable lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    attributes: Vec<SensitiveAttribute>,
    entries: Vec<LexiconEntry>,
    embedding_model_id: String,
    dim: usize,
    template: String,
}

impl Lexicon {
    pub fn attributes(&self) -> &[SensitiveAttribute] {
        &self.attributes
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn embedding_model_id(&self) -> &str {
        &self.embedding_model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn attribute(&self, name: &str) -> Result<&SensitiveAttribute, LexiconError> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| LexiconError::UnknownAttribute(name.to_string()))
    }

    pub fn group(&self, id: &str) -> Result<&DemographicGroup, LexiconError> {
        self.attributes
            .iter()
            .flat_map(|a| &a.groups)
            .find(|g| g.id == id)
            .ok_or_else(|| LexiconError::UnknownGroup(id.to_string()))
    }

    /// The group's pleasant (T+) and unpleasant (T−) entries, in file order.
    pub fn word_sets(
        &self,
        group_id: &str,
    ) -> Result<(Vec<&LexiconEntry>, Vec<&LexiconEntry>), LexiconError> {
        self.group(group_id)?;
        Ok(self
            .entries
            .iter()
            .filter(|e| e.group_id == group_id)
            .partition(|e| e.polarity == Polarity::Pleasant))
    }

    /// Canonical file form (all vectors present).
    pub fn to_file(&self) -> LexiconFile {
        LexiconFile {
            embedding_model_id: self.embedding_model_id.clone(),
            dim: self.dim,
            template: self.template.clone(),
            attributes: self
                .attributes
                .iter()
                .map(|a| AttributeRecord {
                    name: a.name.clone(),
                    groups: a
                        .groups
                        .iter()
                        .map(|g| GroupRecord {
                            id: g.id.clone(),
                            surface_text: g.surface_text.clone(),
                            vector: Some(g.embedding.as_slice().to_vec()),
                        })
                        .collect(),
                })
                .collect(),
            entries: self
                .entries
                .iter()
                .map(|e| EntryRecord {
                    word: e.word.clone(),
                    group_id: e.group_id.clone(),
                    polarity: e.polarity.clone(),
                    vector: Some(e.embedding.as_slice().to_vec()),
                })
                .collect(),
        }
    }

    /// Builds a lexicon from an in-memory document.
    pub fn from_file(file: LexiconFile, embed: Option<EmbedAtLoad<'_>>) -> Result<Lexicon, LexiconError> {
        build(file, embed)
    }

    pub fn save(&self, path: &Path) -> Result<(), LexiconError> {
        let text = serde_json::to_string_pretty(&self.to_file()).expect("lexicon serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| LexiconError::Read { path: path.to_path_buf(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRecord {
    pub id: String,
    pub surface_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeRecord {
    pub name: String,
    pub groups: Vec<GroupRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub word: String,
    pub group_id: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

/// On-disk lexicon document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconFile {
    pub embedding_model_id: String,
    pub dim: usize,
    #[serde(default = "default_template")]
    pub template: String,
    pub attributes: Vec<AttributeRecord>,
    pub entries: Vec<EntryRecord>,
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

/// Embedder used to fill vectors absent from the file.
pub struct EmbedAtLoad<'a> {
    pub embedder: &'a dyn Embedder,
    pub instructions: &'a RoleInstructions,
}

pub fn read_lexicon_file(path: &Path) -> Result<LexiconFile, LexiconError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LexiconError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    serde_json::from_str(&text)
        .map_err(|e| LexiconError::Read { path: path.to_path_buf(), message: format!("parse error: {e}") })
}

/// Loads a lexicon whose vectors are all present in the file.
pub fn load_lexicon(path: &Path) -> Result<Lexicon, LexiconError> {
    load_lexicon_with(path, None)
}

pub fn load_lexicon_with(path: &Path, embed: Option<EmbedAtLoad<'_>>) -> Result<Lexicon, LexiconError> {
    let file = read_lexicon_file(path)?;
    build(file, embed).map_err(|e| match e {
        LexiconError::Invalid { violations, .. } => {
            LexiconError::Invalid { path: path.to_path_buf(), violations }
        }
        other => other,
    })
}

/// Every violation in the file, or an empty list when it is valid.
pub fn validate_file(path: &Path) -> Vec<Violation> {
    match read_lexicon_file(path) {
        Err(e) => vec![Violation { location: path.display().to_string(), message: e.to_string() }],
        Ok(file) => check(&file, false),
    }
}

fn check_vector(
    v: Option<&Vec<f64>>,
    dim: usize,
    location: &str,
    allow_missing: bool,
    out: &mut Vec<Violation>,
) {
    let mut push = |message: String| out.push(Violation { location: location.to_string(), message });
    match v {
        None if !allow_missing => push("vector missing (embed-at-load is disabled)".into()),
        None => {}
        Some(v) if v.len() != dim => push(format!("vector has {} components, lexicon dim is {dim}", v.len())),
        Some(v) => {
            if let Some(i) = v.iter().position(|c| !c.is_finite()) {
                push(format!("component {i} is not finite"));
            } else if v.iter().all(|&c| c == 0.0) {
                push("vector has zero norm".into());
            }
        }
    }
}

/// Checks every structural invariant of a lexicon document.
pub fn check(file: &LexiconFile, allow_missing_vectors: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });
    if file.dim == 0 {
        push("dim".into(), "must be positive".into());
    }
    if file.embedding_model_id.trim().is_empty() {
        push("embedding_model_id".into(), "must not be empty".into());
    }
    if let Err(e) = contextualize("x", &file.template) {
        push("template".into(), e.to_string());
    }
    if file.attributes.is_empty() {
        push("attributes".into(), "at least one attribute is required".into());
    }
    let mut attr_names = HashSet::new();
    let mut group_ids: HashMap<&str, String> = HashMap::new();
    let mut vec_violations = Vec::new();
    for (ai, attr) in file.attributes.iter().enumerate() {
        let loc = format!("attributes[{ai}] ({:?})", attr.name);
        if attr.name.trim().is_empty() {
            push(loc.clone(), "name must not be empty".into());
        }
        if !attr_names.insert(attr.name.as_str()) {
            push(loc.clone(), "duplicate attribute name".into());
        }
        if attr.groups.len() < 2 {
            push(loc.clone(), format!("needs at least 2 groups, has {}", attr.groups.len()));
        }
        for (gi, g) in attr.groups.iter().enumerate() {
            let gloc = format!("{loc}.groups[{gi}] ({:?})", g.id);
            if g.id.trim().is_empty() {
                push(gloc.clone(), "id must not be empty".into());
            }
            if g.surface_text.trim().is_empty() {
                push(gloc.clone(), "surface_text must not be empty".into());
            }
            if let Some(prev) = group_ids.insert(g.id.as_str(), gloc.clone()) {
                push(gloc.clone(), format!("duplicate group id (first defined at {prev})"));
            }
            check_vector(g.vector.as_ref(), file.dim, &gloc, allow_missing_vectors, &mut vec_violations);
        }
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (ei, e) in file.entries.iter().enumerate() {
        let loc = format!("entries[{ei}] ({:?})", e.word);
        if e.word.trim().is_empty() {
            push(loc.clone(), "word must not be empty".into());
        }
        if !group_ids.contains_key(e.group_id.as_str()) {
            push(loc.clone(), format!("group_id {:?} does not resolve", e.group_id));
        }
        let c = counts.entry(e.group_id.as_str()).or_default();
        match e.polarity {
            Polarity::Pleasant => c.0 += 1,
            Polarity::Unpleasant => c.1 += 1,
        }
        check_vector(e.vector.as_ref(), file.dim, &loc, allow_missing_vectors, &mut vec_violations);
    }
    for attr in &file.attributes {
        for g in &attr.groups {
            let (plus, minus) = counts.get(g.id.as_str()).copied().unwrap_or_default();
            let gloc = group_ids.get(g.id.as_str()).cloned().unwrap_or_default();
            if minus == 0 {
                push(gloc.clone(), "unpleasant word set is empty".into());
            }
            if plus == 0 {
                push(gloc, "pleasant word set is empty".into());
            }
        }
    }
    out.extend(vec_violations);
    out
}

fn build(mut file: LexiconFile, embed: Option<EmbedAtLoad<'_>>) -> Result<Lexicon, LexiconError> {
    let mut violations = check(&file, embed.is_some());
    if let Some(em) = &embed {
        if em.embedder.model_id() != file.embedding_model_id {
            violations.push(Violation {
                location: "embedding_model_id".into(),
                message: format!(
                    "file declares {:?} but the embedder is {:?}",
                    file.embedding_model_id,
                    em.embedder.model_id()
                ),
            });
        }
        if let Some(d) = em.embedder.dim().filter(|&d| d != file.dim) {
            violations.push(Violation {
                location: "dim".into(),
                message: format!("file declares {} but the embedder produces {d}", file.dim),
            });
        }
    }
    if !violations.is_empty() {
        return Err(LexiconError::Invalid { path: PathBuf::new(), violations });
    }
    if let Some(em) = embed {
        fill_missing(&mut file, em)?;
        let after = check(&file, false);
        if !after.is_empty() {
            return Err(LexiconError::Invalid { path: PathBuf::new(), violations: after });
        }
    }
    let to_embedding = |v: Option<Vec<f64>>| Embedding::new(v.expect("checked")).expect("checked");
    let attributes = file
        .attributes
        .into_iter()
        .map(|a| SensitiveAttribute {
            name: a.name,
            groups: a
                .groups
                .into_iter()
                .map(|g| DemographicGroup { id: g.id, surface_text: g.surface_text, embedding: to_embedding(g.vector) })
                .collect(),
        })
        .collect();
    let entries = file
        .entries
        .into_iter()
        .map(|e| LexiconEntry {
            contextualized_text: contextualize(&e.word, &file.template).expect("checked"),
            word: e.word,
            polarity: e.polarity,
            group_id: e.group_id,
            embedding: to_embedding(e.vector),
        })
        .collect();
    Ok(Lexicon {
        attributes,
        entries,
        embedding_model_id: file.embedding_model_id,
        dim: file.dim,
        template: file.template,
    })
}

fn fill_missing(file: &mut LexiconFile, em: EmbedAtLoad<'_>) -> Result<(), LexiconError> {
    let group_inst = em.instructions.group.as_deref();
    let word_inst = em.instructions.word.as_deref();
    let mut requests = Vec::new();
    for a in &file.attributes {
        for g in a.groups.iter().filter(|g| g.vector.is_none()) {
            requests.push(EmbeddingRequest::new(g.surface_text.clone(), group_inst));
        }
    }
    for e in file.entries.iter().filter(|e| e.vector.is_none()) {
        requests.push(EmbeddingRequest::new(contextualize(&e.word, &file.template)?, word_inst));
    }
    if requests.is_empty() {
        return Ok(());
    }
    let mut vectors = em.embedder.embed(&requests)?.into_iter();
    for a in &mut file.attributes {
        for g in a.groups.iter_mut().filter(|g| g.vector.is_none()) {
            g.vector = vectors.next().map(Embedding::into_vec);
        }
    }
    for e in file.entries.iter_mut().filter(|e| e.vector.is_none()) {
        e.vector = vectors.next().map(Embedding::into_vec);
    }
    Ok(())
}
