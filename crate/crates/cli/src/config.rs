//! Run configuration: a TOML document, resolved relative to its own
//! directory, then overridden by `--set key=value` pairs and typed flags.

use std::path::{Path, PathBuf};

use debiaser_core::detector::DetectionConfig;
use debiaser_core::eval::run::DEFAULT_MAX_ERROR_RATE;
use debiaser_core::providers::{
    ChatProviderSpec, ClassifierProviderSpec, EmbeddingProviderSpec, RoleInstructions,
};
use debiaser_core::rewriter::TaskMode;
use serde::{Deserialize, Serialize};

use crate::exit::{Exit, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: TaskMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
    #[serde(default)]
    pub recheck: bool,
    #[serde(default = "default_max_error_rate")]
    pub max_error_rate: f64,
    #[serde(default = "default_true")]
    pub shuffle_options: bool,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub instructions: RoleInstructions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingProviderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_cache: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<ChatProviderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierProviderSpec>,
    #[serde(default)]
    pub datasets: DatasetPaths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stereoset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winobias: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bold: Option<PathBuf>,
}

fn default_mode() -> TaskMode {
    TaskMode::ChatRewrite
}
fn default_workers() -> usize {
    4
}
fn default_max_error_rate() -> f64 {
    DEFAULT_MAX_ERROR_RATE
}
fn default_true() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config deserializes")
    }
}

/// Typed flag overrides; `None` leaves the configured value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub template_dir: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub attribute: Option<String>,
    pub mode: Option<TaskMode>,
    pub recheck: bool,
    pub epsilon: Option<f64>,
    pub epsilon_orientation: Option<f64>,
    pub epsilon_unpleasant: Option<f64>,
    pub delta: Option<f64>,
    pub max_error_rate: Option<f64>,
    pub no_shuffle: bool,
    pub embedding_cache: Option<PathBuf>,
    pub set: Vec<String>,
}

fn config_error(message: impl ToString) -> Failure {
    Failure::new(Exit::Config, message)
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, Failure> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                let base = p.parent().filter(|b| !b.as_os_str().is_empty()).unwrap_or(Path::new("."));
                cfg.resolve_paths(base);
                cfg
            }
            None => RunConfig::default(),
        };
        if !overrides.set.is_empty() {
            cfg = cfg.with_sets(&overrides.set)?;
        }
        cfg.apply(overrides);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = base.join(&*p);
        self.lexicon.as_mut().map(join);
        self.template_dir.as_mut().map(join);
        self.embedding_cache.as_mut().map(join);
        self.output.as_mut().map(join);
        self.datasets.stereoset.as_mut().map(join);
        self.datasets.winobias.as_mut().map(join);
        self.datasets.bold.as_mut().map(join);
        if let Some(e) = &mut self.embedding {
            e.resolve_paths(base);
        }
        if let Some(l) = &mut self.llm {
            l.resolve_paths(base);
        }
        if let Some(c) = &mut self.classifier {
            c.resolve_paths(base);
        }
    }

    /// Applies `dotted.key=value` assignments. Values are parsed as TOML
    /// and fall back to plain strings.
    fn with_sets(&self, sets: &[String]) -> Result<Self, Failure> {
        let mut doc = toml::Value::try_from(self).map_err(config_error)?;
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| config_error(format!("--set {s:?}: expected key=value")))?;
            let value = parse_value(raw.trim());
            let parts: Vec<&str> = key.trim().split('.').collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(config_error(format!("--set {s:?}: malformed key")));
            }
            let mut table = doc.as_table_mut().expect("config is a table");
            for p in &parts[..parts.len() - 1] {
                let slot = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()));
                table = slot
                    .as_table_mut()
                    .ok_or_else(|| config_error(format!("--set {s:?}: {p} is not a table")))?;
            }
            table.insert(parts[parts.len() - 1].to_string(), value);
        }
        doc.try_into().map_err(|e: toml::de::Error| config_error(format!("--set: {e}")))
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = &o.template_dir {
            self.template_dir = Some(v.clone());
        }
        if let Some(v) = &o.lexicon {
            self.lexicon = Some(v.clone());
        }
        if let Some(v) = &o.output {
            self.output = Some(v.clone());
        }
        if let Some(v) = &o.attribute {
            self.attribute = Some(v.clone());
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        if o.recheck {
            self.recheck = true;
        }
        if let Some(v) = o.epsilon {
            self.detection.epsilon_orientation = v;
            self.detection.epsilon_unpleasant = v;
        }
        if let Some(v) = o.epsilon_orientation {
            self.detection.epsilon_orientation = v;
        }
        if let Some(v) = o.epsilon_unpleasant {
            self.detection.epsilon_unpleasant = v;
        }
        if let Some(v) = o.delta {
            self.detection.delta_degenerate = v;
        }
        if let Some(v) = o.max_error_rate {
            self.max_error_rate = v;
        }
        if o.no_shuffle {
            self.shuffle_options = false;
        }
        if let Some(v) = &o.embedding_cache {
            self.embedding_cache = Some(v.clone());
        }
    }

    /// Checks everything that can be checked without contacting a provider.
    pub fn validate(&self) -> Result<(), Failure> {
        self.detection.validate().map_err(config_error)?;
        if self.workers == 0 {
            return Err(config_error("workers must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_error_rate) {
            return Err(config_error(format!("max_error_rate must lie in [0, 1], got {}", self.max_error_rate)));
        }
        if let Some(p) = &self.lexicon {
            if !p.is_file() {
                return Err(config_error(format!("lexicon {} does not exist", p.display())));
            }
        }
        if let Some(d) = &self.template_dir {
            if !d.is_dir() {
                return Err(config_error(format!("template directory {} does not exist", d.display())));
            }
        }
        if let Some(e) = &self.embedding {
            e.validate().map_err(|m| config_error(format!("embedding: {m}")))?;
        }
        if let Some(l) = &self.llm {
            l.validate().map_err(|m| config_error(format!("llm: {m}")))?;
        }
        if let Some(c) = &self.classifier {
            c.validate().map_err(|m| config_error(format!("classifier: {m}")))?;
        }
        Ok(())
    }

    /// Report directory; `reports` under the working directory by default.
    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("reports"))
    }

    pub fn lexicon_path(&self) -> Result<&Path, Failure> {
        self.lexicon.as_deref().ok_or_else(|| config_error("no lexicon configured (set `lexicon` or pass --lexicon)"))
    }

    pub fn embedding_spec(&self) -> Result<&EmbeddingProviderSpec, Failure> {
        self.embedding.as_ref().ok_or_else(|| config_error("no [embedding] provider configured"))
    }

    pub fn llm_spec(&self) -> Result<&ChatProviderSpec, Failure> {
        self.llm.as_ref().ok_or_else(|| config_error("no [llm] provider configured"))
    }

    /// Names of credential variables referenced by HTTP providers.
    pub fn credential_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(EmbeddingProviderSpec::Http(c)) = &self.embedding {
            out.extend(c.connection.auth_env_var.clone());
        }
        if let Some(ChatProviderSpec::Http(c)) = &self.llm {
            out.extend(c.connection.auth_env_var.clone());
        }
        if let Some(ClassifierProviderSpec::Http(c)) = &self.classifier {
            for ep in [&c.toxicity, &c.regard, &c.sentiment].into_iter().flatten() {
                out.extend(ep.connection.auth_env_var.clone());
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
