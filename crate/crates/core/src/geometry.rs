//! Dimension-checked vector arithmetic over text embeddings.
//!
//! Everything here is a pure function over immutable inputs. Dot products
//! accumulate in `f64` and cosine similarities are clamped to `[-1, 1]`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default tolerance for the repair-vector degeneracy check.
pub const DEFAULT_DEGENERACY_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector must have at least one component")]
    Empty,
    #[error("component {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("empty candidate list")]
    NoCandidates,
    #[error("no repair possible: |cos| = {cosine:.9} is within {delta:e} of 1")]
    Degenerate { cosine: f64, delta: f64 },
}

/// A fixed-dimension embedding with finite components.
#[derive(Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(components: Vec<f64>) -> Result<Self, GeometryError> {
        if components.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some((index, &value)) = components.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(GeometryError::NonFinite { index, value });
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64, GeometryError> {
        check_dims(self, other)?;
        Ok(raw_dot(&self.0, &other.0))
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Embedding, GeometryError> {
        Embedding::new(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn add(&self, other: &Embedding) -> Result<Embedding, GeometryError> {
        check_dims(self, other)?;
        Embedding::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Embedding) -> Result<Embedding, GeometryError> {
        check_dims(self, other)?;
        Embedding::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 6;
        write!(f, "Embedding[{}](", self.dim())?;
        for (i, c) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c:.5}")?;
        }
        if self.dim() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, ")")
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = GeometryError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Embedding::new(value)
    }
}

impl Serialize for Embedding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let components = Vec::<f64>::deserialize(deserializer)?;
        Embedding::new(components).map_err(serde::de::Error::custom)
    }
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<(), GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

fn raw_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzero_norm(v: &Embedding) -> Result<f64, GeometryError> {
    let n = v.norm();
    if n == 0.0 {
        Err(GeometryError::ZeroNorm)
    } else {
        Ok(n)
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, GeometryError> {
    check_dims(a, b)?;
    let na = nonzero_norm(a)?;
    let nb = nonzero_norm(b)?;
    Ok((raw_dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn normalize(v: &Embedding) -> Result<Embedding, GeometryError> {
    let n = nonzero_norm(v)?;
    Embedding::new(v.0.iter().map(|c| c / n).collect())
}

/// Computes the repair vector `u*` for a response embedding and the
/// embedding of its unpleasant characteristic.
///
/// With `v1 = v_r/|v_r|`, `v2 = w/|w|` and `c = cos(v_r, w)`:
///
/// ```text
/// u1 = c·v2 − v1
/// u* = u1/|u1| − v1
/// ```
///
/// so that `⟨u* + v1, v2⟩ = 0`. Orthogonality holds against the
/// normalized response, not the raw one.
///
/// Fails with [`GeometryError::Degenerate`] when `|c| > 1 − delta`, where
/// `u1` shrinks to zero and has no meaningful direction.
pub fn repair_vector(
    response: &Embedding,
    unpleasant: &Embedding,
    delta: f64,
) -> Result<Embedding, GeometryError> {
    check_dims(response, unpleasant)?;
    let v1 = normalize(response)?;
    let v2 = normalize(unpleasant)?;
    let c = cosine(response, unpleasant)?;
    if c.abs() > 1.0 - delta {
        return Err(GeometryError::Degenerate { cosine: c, delta });
    }
    let u1: Vec<f64> = v2.0.iter().zip(&v1.0).map(|(b, a)| c * b - a).collect();
    let u1_norm = u1.iter().map(|x| x * x).sum::<f64>().sqrt();
    if u1_norm == 0.0 || !u1_norm.is_finite() {
        return Err(GeometryError::Degenerate { cosine: c, delta });
    }
    Embedding::new(u1.iter().zip(&v1.0).map(|(u, a)| u / u1_norm - a).collect())
}

/// Cosine similarity of `query` against every candidate, in order.
pub fn similarities<'a, I>(query: &Embedding, candidates: I) -> Result<Vec<f64>, GeometryError>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    candidates.into_iter().map(|c| cosine(query, c)).collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the candidate most cosine-similar to `query` (lowest index on ties).
pub fn nearest<'a, I>(query: &Embedding, candidates: I) -> Result<usize, GeometryError>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let scores = similarities(query, candidates)?;
    argmax(&scores).ok_or(GeometryError::NoCandidates)
}
