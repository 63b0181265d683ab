//! Orientation and unpleasant-characteristic detection for a single response.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{argmax, cosine, Embedding, GeometryError, DEFAULT_DEGENERACY_DELTA};
use crate::lexicon::{Lexicon, LexiconError, SensitiveAttribute};
use crate::providers::{Embedder, EmbeddingRequest, ProviderError, RoleInstructions};

pub const DEFAULT_EPSILON: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("embedding the response: {0}")]
    Provider(#[from] ProviderError),
    #[error("attribute {0:?} has no groups")]
    NoGroups(String),
    #[error("group {0:?} has no unpleasant entries")]
    NoUnpleasant(String),
    #[error("invalid detection config: {0}")]
    Config(String),
}

/// Thresholds for the two detection gates. A threshold above 1 can never be
/// met, which disables the gate; 0 lets every non-negative similarity through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub epsilon_orientation: f64,
    pub epsilon_unpleasant: f64,
    pub delta_degenerate: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            epsilon_orientation: DEFAULT_EPSILON,
            epsilon_unpleasant: DEFAULT_EPSILON,
            delta_degenerate: DEFAULT_DEGENERACY_DELTA,
        }
    }
}

impl DetectionConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon_orientation: epsilon, epsilon_unpleasant: epsilon, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        for (name, v) in [
            ("epsilon_orientation", self.epsilon_orientation),
            ("epsilon_unpleasant", self.epsilon_unpleasant),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(DetectError::Config(format!("{name} must be a finite number >= 0, got {v}")));
            }
        }
        let d = self.delta_degenerate;
        if !(d > 0.0 && d < 1.0) {
            return Err(DetectError::Config(format!("delta_degenerate must lie in (0, 1), got {d}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub group_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unpleasant {
    pub word: String,
    pub similarity: f64,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSimilarity {
    pub group_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub attribute: String,
    pub response_text: String,
    pub response_embedding: Embedding,
    pub orientation: Option<Orientation>,
    pub unpleasant: Option<Unpleasant>,
    /// Every group of the attribute, in lexicon order.
    pub all_group_similarities: Vec<GroupSimilarity>,
}

impl BiasReport {
    pub fn is_biased(&self) -> bool {
        self.orientation.is_some() && self.unpleasant.is_some()
    }
}

fn group_similarities(v_r: &Embedding, attribute: &SensitiveAttribute) -> Result<Vec<f64>, DetectError> {
    if attribute.groups.is_empty() {
        return Err(DetectError::NoGroups(attribute.name.clone()));
    }
    attribute
        .groups
        .iter()
        .map(|g| cosine(v_r, &g.embedding).map_err(DetectError::from))
        .collect()
}

/// The most similar group, if its similarity reaches the orientation threshold.
pub fn detect_orientation(
    v_r: &Embedding,
    attribute: &SensitiveAttribute,
    cfg: &DetectionConfig,
) -> Result<Option<Orientation>, DetectError> {
    let sims = group_similarities(v_r, attribute)?;
    Ok(gate_orientation(attribute, &sims, cfg))
}

fn gate_orientation(attribute: &SensitiveAttribute, sims: &[f64], cfg: &DetectionConfig) -> Option<Orientation> {
    let k = argmax(sims)?;
    (sims[k] >= cfg.epsilon_orientation)
        .then(|| Orientation { group_id: attribute.groups[k].id.clone(), similarity: sims[k] })
}

/// The most similar entry of the group's unpleasant set, if its similarity
/// reaches the unpleasant threshold.
pub fn detect_unpleasant(
    v_r: &Embedding,
    group_id: &str,
    lex: &Lexicon,
    cfg: &DetectionConfig,
) -> Result<Option<Unpleasant>, DetectError> {
    let (_, minus) = lex.word_sets(group_id)?;
    if minus.is_empty() {
        return Err(DetectError::NoUnpleasant(group_id.to_string()));
    }
    let sims = minus
        .iter()
        .map(|e| cosine(v_r, &e.embedding))
        .collect::<Result<Vec<_>, _>>()?;
    let k = argmax(&sims).expect("non-empty");
    Ok((sims[k] >= cfg.epsilon_unpleasant).then(|| Unpleasant {
        word: minus[k].word.clone(),
        similarity: sims[k],
        embedding: minus[k].embedding.clone(),
    }))
}

/// Runs both gates against an already embedded response.
pub fn detect_embedded(
    response_text: &str,
    response_embedding: Embedding,
    attribute_name: &str,
    lex: &Lexicon,
    cfg: &DetectionConfig,
) -> Result<BiasReport, DetectError> {
    let attribute = lex.attribute(attribute_name)?;
    let sims = group_similarities(&response_embedding, attribute)?;
    let orientation = gate_orientation(attribute, &sims, cfg);
    let unpleasant = match &orientation {
        Some(o) => detect_unpleasant(&response_embedding, &o.group_id, lex, cfg)?,
        None => None,
    };
    Ok(BiasReport {
        attribute: attribute.name.clone(),
        response_text: response_text.to_string(),
        response_embedding,
        orientation,
        unpleasant,
        all_group_similarities: attribute
            .groups
            .iter()
            .zip(sims)
            .map(|(g, similarity)| GroupSimilarity { group_id: g.id.clone(), similarity })
            .collect(),
    })
}

/// Embeds the response once and runs both detection gates.
pub fn detect(
    response_text: &str,
    attribute_name: &str,
    lex: &Lexicon,
    cfg: &DetectionConfig,
    embedder: &dyn Embedder,
    instructions: &RoleInstructions,
) -> Result<BiasReport, DetectError> {
    lex.attribute(attribute_name)?;
    let v_r = embedder.embed_one(EmbeddingRequest::new(response_text, instructions.response.as_deref()))?;
    detect_embedded(response_text, v_r, attribute_name, lex, cfg)
}
