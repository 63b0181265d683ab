use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::http::JsonClient;
use super::{ProviderConfig, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Toxicity,
    Regard,
    Sentiment,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [Self::Toxicity, Self::Regard, Self::Sentiment];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Toxicity => "toxicity",
            Self::Regard => "regard",
            Self::Sentiment => "sentiment",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sentiment and regard produce one of these labels; toxicity produces the
/// label `"toxicity"` with a score in `[0, 1]`.
pub const POLARITY_LABELS: [&str; 3] = ["positive", "negative", "neutral"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: String,
    pub score: f64,
}

impl Classification {
    pub fn validate(&self, kind: ClassifierKind) -> Result<(), ProviderError> {
        let label_ok = match kind {
            ClassifierKind::Toxicity => self.label == "toxicity",
            _ => POLARITY_LABELS.contains(&self.label.as_str()),
        };
        if !label_ok {
            return Err(ProviderError::UnknownLabel { kind, label: self.label.clone() });
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(ProviderError::Malformed {
                provider: kind.to_string(),
                message: format!("score {} outside [0, 1]", self.score),
            });
        }
        Ok(())
    }
}

pub trait Classifier: Send + Sync {
    fn supports(&self, kind: ClassifierKind) -> bool;

    fn classify(&self, text: &str, kind: ClassifierKind) -> Result<Classification, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierRecord {
    pub text: String,
    #[serde(default)]
    pub toxicity: Option<f64>,
    #[serde(default)]
    pub regard: Option<Classification>,
    #[serde(default)]
    pub sentiment: Option<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierFile {
    pub records: Vec<ClassifierRecord>,
}

/// Looks up pre-computed labels by exact text.
pub struct FixtureClassifier {
    by_text: HashMap<String, ClassifierRecord>,
}

impl FixtureClassifier {
    pub fn new(file: ClassifierFile) -> Result<Self, ProviderError> {
        let mut by_text = HashMap::new();
        for r in file.records {
            if let Some(t) = r.toxicity {
                Classification { label: "toxicity".into(), score: t }.validate(ClassifierKind::Toxicity)?;
            }
            if let Some(c) = &r.regard {
                c.validate(ClassifierKind::Regard)?;
            }
            if let Some(c) = &r.sentiment {
                c.validate(ClassifierKind::Sentiment)?;
            }
            by_text.insert(r.text.clone(), r);
        }
        Ok(Self { by_text })
    }

    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::file(path, e))?;
        let file: ClassifierFile = serde_json::from_str(&text).map_err(|e| ProviderError::file(path, e))?;
        Self::new(file).map_err(|e| ProviderError::file(path, e))
    }
}

impl Classifier for FixtureClassifier {
    fn supports(&self, _kind: ClassifierKind) -> bool {
        true
    }

    fn classify(&self, text: &str, kind: ClassifierKind) -> Result<Classification, ProviderError> {
        let miss = || ProviderError::ClassifierMiss { kind, text: text.to_string() };
        let rec = self.by_text.get(text).ok_or_else(miss)?;
        match kind {
            ClassifierKind::Toxicity => rec
                .toxicity
                .map(|score| Classification { label: "toxicity".into(), score })
                .ok_or_else(miss),
            ClassifierKind::Regard => rec.regard.clone().ok_or_else(miss),
            ClassifierKind::Sentiment => rec.sentiment.clone().ok_or_else(miss),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierEndpoint {
    #[serde(flatten)]
    pub connection: ProviderConfig,
    /// Remote label → canonical label. Unmapped labels are lower-cased.
    #[serde(default)]
    pub label_map: BTreeMap<String, String>,
    /// Remote label whose score is the toxicity score.
    #[serde(default = "default_toxic_label")]
    pub toxic_label: String,
    /// Divisor bringing remote scores into `[0, 1]` (100 for percentage APIs).
    #[serde(default = "default_scale")]
    pub score_scale: f64,
}

fn default_toxic_label() -> String {
    "toxic".into()
}
fn default_scale() -> f64 {
    1.0
}

impl ClassifierEndpoint {
    pub fn new(connection: ProviderConfig) -> Self {
        Self {
            connection,
            label_map: BTreeMap::new(),
            toxic_label: default_toxic_label(),
            score_scale: default_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpClassifierConfig {
    #[serde(default)]
    pub toxicity: Option<ClassifierEndpoint>,
    #[serde(default)]
    pub regard: Option<ClassifierEndpoint>,
    #[serde(default)]
    pub sentiment: Option<ClassifierEndpoint>,
}

impl HttpClassifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        for ep in [&self.toxicity, &self.regard, &self.sentiment].into_iter().flatten() {
            ep.connection.validate()?;
            if !(ep.score_scale > 0.0) {
                return Err("score_scale must be positive".into());
            }
        }
        Ok(())
    }
}

/// Text-classification client for inference APIs answering
/// `{"inputs": text}` with `[{label, score}, ..]` (optionally nested once).
pub struct HttpClassifier {
    endpoints: BTreeMap<ClassifierKind, (ClassifierEndpoint, JsonClient)>,
}

impl HttpClassifier {
    pub fn new(config: HttpClassifierConfig) -> Self {
        let mut endpoints = BTreeMap::new();
        for (kind, ep) in [
            (ClassifierKind::Toxicity, config.toxicity),
            (ClassifierKind::Regard, config.regard),
            (ClassifierKind::Sentiment, config.sentiment),
        ] {
            if let Some(ep) = ep {
                let client = JsonClient::new(format!("classifier:{kind}"), ep.connection.clone());
                endpoints.insert(kind, (ep, client));
            }
        }
        Self { endpoints }
    }
}

fn scored_labels(v: &Value) -> Option<Vec<(String, f64)>> {
    let arr = v.as_array()?;
    let flat = match arr.first() {
        Some(Value::Array(inner)) => inner,
        _ => arr,
    };
    flat.iter()
        .map(|item| Some((item.get("label")?.as_str()?.to_string(), item.get("score")?.as_f64()?)))
        .collect()
}

impl Classifier for HttpClassifier {
    fn supports(&self, kind: ClassifierKind) -> bool {
        self.endpoints.contains_key(&kind)
    }

    fn classify(&self, text: &str, kind: ClassifierKind) -> Result<Classification, ProviderError> {
        let (ep, client) = self.endpoints.get(&kind).ok_or(ProviderError::Unsupported { kind })?;
        let resp = client.post(&json!({ "inputs": text }))?;
        let labels = scored_labels(&resp).ok_or_else(|| client.malformed("expected [{label, score}]"))?;
        let canonical = |raw: &str| ep.label_map.get(raw).cloned().unwrap_or_else(|| raw.to_lowercase());
        let out = match kind {
            ClassifierKind::Toxicity => {
                let score = labels
                    .iter()
                    .find(|(l, _)| canonical(l) == ep.toxic_label.to_lowercase() || *l == ep.toxic_label)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| client.malformed(format!("no {:?} label", ep.toxic_label)))?;
                Classification { label: "toxicity".into(), score: score / ep.score_scale }
            }
            _ => {
                let (label, score) = labels
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .ok_or_else(|| client.malformed("empty label list"))?;
                Classification { label: canonical(label), score: score / ep.score_scale }
            }
        };
        out.validate(kind)?;
        Ok(out)
    }
}
