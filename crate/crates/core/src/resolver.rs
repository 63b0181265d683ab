//! Pleasant resolution: the repair vector for a detected unpleasant
//! characteristic and the pleasant word nearest to it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{BiasReport, DetectionConfig};
use crate::geometry::{argmax, cosine, repair_vector, Embedding, GeometryError};
use crate::lexicon::{Lexicon, LexiconError};

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("report has no orientation")]
    NotOriented,
    #[error("report has no unpleasant characteristic")]
    NoUnpleasant,
    #[error("no resolution: {0}")]
    NoResolution(GeometryError),
    #[error("group {0:?} has no pleasant entries")]
    NoPleasant(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Geometry(GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub repair_vector: Embedding,
    pub pleasant_word: String,
    pub pleasant_similarity: f64,
    pub group_id: String,
}

/// Picks from the oriented group's pleasant set the entry nearest the repair
/// vector. There is no similarity floor.
pub fn resolve(report: &BiasReport, lex: &Lexicon, cfg: &DetectionConfig) -> Result<Resolution, ResolveError> {
    let orientation = report.orientation.as_ref().ok_or(ResolveError::NotOriented)?;
    let unpleasant = report.unpleasant.as_ref().ok_or(ResolveError::NoUnpleasant)?;
    let (plus, _) = lex.word_sets(&orientation.group_id)?;
    if plus.is_empty() {
        return Err(ResolveError::NoPleasant(orientation.group_id.clone()));
    }
    let u = repair_vector(&report.response_embedding, &unpleasant.embedding, cfg.delta_degenerate).map_err(
        |e| match e {
            GeometryError::Degenerate { .. } => ResolveError::NoResolution(e),
            other => ResolveError::Geometry(other),
        },
    )?;
    let sims = plus
        .iter()
        .map(|e| cosine(&e.embedding, &u))
        .collect::<Result<Vec<_>, _>>()
        .map_err(ResolveError::Geometry)?;
    let k = argmax(&sims).expect("non-empty");
    Ok(Resolution {
        repair_vector: u,
        pleasant_word: plus[k].word.clone(),
        pleasant_similarity: sims[k],
        group_id: orientation.group_id.clone(),
    })
}
