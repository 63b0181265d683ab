//! Loaders for the three benchmarks, each in its published layout and in a
//! normalized one-record-per-line JSON form. Loading is all or nothing: the
//! first bad record aborts with its location.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::metrics::StereoLabel;

pub const BLANK: &str = "___";

const PRONOUNS: [&str; 9] = ["he", "she", "him", "her", "his", "hers", "they", "them", "their"];

#[derive(Debug, Error)]
#[error("{path}:{location}: {message}")]
pub struct DatasetError {
    pub path: PathBuf,
    pub location: String,
    pub message: String,
}

fn fail(path: &Path, location: impl Into<String>, message: impl Into<String>) -> DatasetError {
    DatasetError { path: path.to_path_buf(), location: location.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereoOption {
    pub text: String,
    pub label: StereoLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereoSetInstance {
    #[serde(default)]
    pub id: String,
    pub context: String,
    pub options: Vec<StereoOption>,
    pub target_attribute: String,
}

impl StereoSetInstance {
    fn check(&self) -> Result<(), String> {
        if self.context.trim().is_empty() {
            return Err("context is empty".into());
        }
        if self.target_attribute.trim().is_empty() {
            return Err("target_attribute is empty".into());
        }
        if self.options.len() != 3 {
            return Err(format!("expected 3 options, found {}", self.options.len()));
        }
        let labels: HashSet<_> = self.options.iter().map(|o| o.label).collect();
        if labels.len() != 3 {
            return Err("option labels must be stereotype, anti_stereotype and meaningless, once each".into());
        }
        if self.options.iter().any(|o| o.text.trim().is_empty()) {
            return Err("option text is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WinoBiasInstance {
    #[serde(default)]
    pub id: String,
    pub sentence_with_blank: String,
    pub professions: Vec<String>,
    #[serde(default)]
    pub gold_note: Option<String>,
    #[serde(default)]
    pub split: Option<String>,
}

impl WinoBiasInstance {
    fn check(&self) -> Result<(), String> {
        let blanks = self.sentence_with_blank.matches(BLANK).count();
        if blanks != 1 {
            return Err(format!("sentence must contain exactly one {BLANK} blank, found {blanks}"));
        }
        if !(1..=2).contains(&self.professions.len()) {
            return Err(format!("expected 1 or 2 professions, found {}", self.professions.len()));
        }
        Ok(())
    }

    /// The sentence with the blank replaced by `filler`.
    pub fn filled(&self, filler: &str) -> String {
        self.sentence_with_blank.replacen(BLANK, filler, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoldPrompt {
    #[serde(default)]
    pub id: String,
    pub prefix: String,
    pub domain: String,
    #[serde(default)]
    pub category: Option<String>,
}

impl BoldPrompt {
    fn check(&self) -> Result<(), String> {
        if self.prefix.trim().is_empty() {
            return Err("prefix is empty".into());
        }
        if self.domain.trim().is_empty() {
            return Err("domain is empty".into());
        }
        Ok(())
    }

    pub fn word_count(&self) -> usize {
        self.prefix.split_whitespace().count()
    }
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| fail(path, "0", e.to_string()))
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn read_jsonl<T, F>(path: &Path, check: F) -> Result<Vec<T>, DatasetError>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T) -> Result<(), String>,
{
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{}", i + 1);
        let item: T = serde_json::from_str(line).map_err(|e| fail(path, &loc, e.to_string()))?;
        check(&item).map_err(|m| fail(path, &loc, m))?;
        out.push(item);
    }
    if out.is_empty() {
        return Err(fail(path, "0", "dataset is empty"));
    }
    Ok(out)
}

fn fill_ids<T>(items: &mut [T], id: impl Fn(&mut T) -> &mut String) {
    for (i, item) in items.iter_mut().enumerate() {
        let slot = id(item);
        if slot.is_empty() {
            *slot = format!("{i}");
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// StereoSet: the published JSON (`data.intersentence`) or normalized JSONL.
pub fn load_stereoset(path: &Path) -> Result<Vec<StereoSetInstance>, DatasetError> {
    let mut items = if is_jsonl(path) {
        read_jsonl(path, StereoSetInstance::check)?
    } else {
        load_stereoset_published(path)?
    };
    fill_ids(&mut items, |x| &mut x.id);
    Ok(items)
}

fn load_stereoset_published(path: &Path) -> Result<Vec<StereoSetInstance>, DatasetError> {
    let doc: Value = serde_json::from_str(&read(path)?).map_err(|e| fail(path, "0", e.to_string()))?;
    let list = doc
        .pointer("/data/intersentence")
        .and_then(Value::as_array)
        .ok_or_else(|| fail(path, "data.intersentence", "missing or not an array"))?;
    let mut out = Vec::new();
    for (i, item) in list.iter().enumerate() {
        let loc = format!("data.intersentence[{i}]");
        let str_at = |key: &str| {
            item.get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| fail(path, &loc, format!("missing string field {key:?}")))
        };
        let sentences = item
            .get("sentences")
            .and_then(Value::as_array)
            .ok_or_else(|| fail(path, &loc, "missing sentences array"))?;
        let mut options = Vec::new();
        for (j, s) in sentences.iter().enumerate() {
            let sloc = format!("{loc}.sentences[{j}]");
            let text = s
                .get("sentence")
                .and_then(Value::as_str)
                .ok_or_else(|| fail(path, &sloc, "missing sentence"))?;
            let label = match s.get("gold_label").and_then(Value::as_str) {
                Some("stereotype") => StereoLabel::Stereotype,
                Some("anti-stereotype") => StereoLabel::AntiStereotype,
                Some("unrelated") => StereoLabel::Meaningless,
                other => return Err(fail(path, &sloc, format!("unknown gold_label {other:?}"))),
            };
            options.push(StereoOption { text: text.to_string(), label });
        }
        let inst = StereoSetInstance {
            id: item.get("id").and_then(Value::as_str).unwrap_or_default().to_string(),
            context: str_at("context")?,
            options,
            target_attribute: str_at("bias_type")?,
        };
        inst.check().map_err(|m| fail(path, &loc, m))?;
        out.push(inst);
    }
    if out.is_empty() {
        return Err(fail(path, "data.intersentence", "dataset is empty"));
    }
    Ok(out)
}

/// Split name from a published WinoBias file name, e.g.
/// `pro_stereotyped_type1.txt.dev` gives `pro_type1`.
pub fn winobias_split(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?.to_lowercase();
    let side = if name.starts_with("pro") {
        "pro"
    } else if name.starts_with("anti") {
        "anti"
    } else {
        return None;
    };
    let kind = if name.contains("type1") {
        "type1"
    } else if name.contains("type2") {
        "type2"
    } else {
        return None;
    };
    Some(format!("{side}_{kind}"))
}

/// Parses one published WinoBias line: an index, then a sentence with the
/// profession(s) and the pronoun in square brackets.
pub fn parse_winobias_line(line: &str) -> Result<WinoBiasInstance, String> {
    let line = line.trim();
    let (id, sentence) = match line.split_once(' ') {
        Some((n, rest)) if n.chars().all(|c| c.is_ascii_digit()) => (n.to_string(), rest),
        _ => (String::new(), line),
    };
    let mut out = String::new();
    let mut professions = Vec::new();
    let mut pronoun = None;
    let mut rest = sentence;
    while let Some(open) = rest.find('[') {
        let close = rest[open..].find(']').ok_or("unclosed bracket")? + open;
        out.push_str(&rest[..open]);
        let span = &rest[open + 1..close];
        if PRONOUNS.contains(&span.to_lowercase().as_str()) {
            if pronoun.is_some() {
                return Err("more than one bracketed pronoun".into());
            }
            pronoun = Some(span.to_string());
            out.push_str(BLANK);
        } else {
            out.push_str(span);
            let bare = span
                .strip_prefix("The ")
                .or_else(|| span.strip_prefix("the "))
                .or_else(|| span.strip_prefix("A "))
                .or_else(|| span.strip_prefix("a "))
                .unwrap_or(span);
            professions.push(bare.to_string());
        }
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    let pronoun = pronoun.ok_or("no bracketed pronoun")?;
    let inst = WinoBiasInstance {
        id,
        sentence_with_blank: out,
        professions,
        gold_note: Some(pronoun),
        split: None,
    };
    inst.check()?;
    Ok(inst)
}

/// WinoBias: published bracketed `.txt` files or normalized JSONL.
pub fn load_winobias(path: &Path) -> Result<Vec<WinoBiasInstance>, DatasetError> {
    let mut items = if is_jsonl(path) {
        read_jsonl(path, WinoBiasInstance::check)?
    } else {
        let split = winobias_split(path);
        let text = read(path)?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut inst = parse_winobias_line(line).map_err(|m| fail(path, format!("{}", i + 1), m))?;
            inst.split = split.clone();
            out.push(inst);
        }
        if out.is_empty() {
            return Err(fail(path, "0", "dataset is empty"));
        }
        out
    };
    fill_ids(&mut items, |x| &mut x.id);
    Ok(items)
}

/// BOLD: published `{category: {name: [prompts]}}` JSON (domain from the
/// file name, e.g. `gender_prompt.json`, unless given) or normalized JSONL.
pub fn load_bold(path: &Path, domain: Option<&str>) -> Result<Vec<BoldPrompt>, DatasetError> {
    let mut items = if is_jsonl(path) {
        read_jsonl(path, BoldPrompt::check)?
    } else {
        let domain = match domain {
            Some(d) => d.to_string(),
            None => path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.split('_').next())
                .filter(|d| !d.is_empty() && !d.contains('.'))
                .map(str::to_string)
                .ok_or_else(|| fail(path, "0", "cannot infer the domain from the file name"))?,
        };
        let doc: Value = serde_json::from_str(&read(path)?).map_err(|e| fail(path, "0", e.to_string()))?;
        let cats = doc.as_object().ok_or_else(|| fail(path, "$", "expected an object of categories"))?;
        let mut out = Vec::new();
        for (cat, names) in cats {
            let names = names.as_object().ok_or_else(|| fail(path, cat, "expected an object of names"))?;
            for (name, prompts) in names {
                let loc = format!("{cat}.{name}");
                let prompts = prompts.as_array().ok_or_else(|| fail(path, &loc, "expected an array of prompts"))?;
                for (k, p) in prompts.iter().enumerate() {
                    let ploc = format!("{loc}[{k}]");
                    let prefix = p.as_str().ok_or_else(|| fail(path, &ploc, "prompt is not a string"))?;
                    let prompt = BoldPrompt {
                        id: String::new(),
                        prefix: prefix.to_string(),
                        domain: domain.clone(),
                        category: Some(cat.clone()),
                    };
                    prompt.check().map_err(|m| fail(path, &ploc, m))?;
                    out.push(prompt);
                }
            }
        }
        if out.is_empty() {
            return Err(fail(path, "$", "dataset is empty"));
        }
        out
    };
    if let Some(d) = domain.filter(|_| is_jsonl(path)) {
        for p in &mut items {
            p.domain = d.to_string();
        }
    }
    fill_ids(&mut items, |x| &mut x.id);
    Ok(items)
}
