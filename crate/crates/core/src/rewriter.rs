//! Rewrite instructions and the detect, resolve, rewrite pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{detect, BiasReport, DetectError, DetectionConfig};
use crate::geometry::GeometryError;
use crate::lexicon::Lexicon;
use crate::providers::{ChatModel, Embedder, Message, ProviderError, RoleInstructions};
use crate::resolver::{resolve, Resolution, ResolveError};

pub const CHOICE_ARITY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    ChatRewrite,
    MultipleChoice,
    PronounChoice,
}

impl TaskMode {
    pub const ALL: [TaskMode; 3] = [TaskMode::ChatRewrite, TaskMode::MultipleChoice, TaskMode::PronounChoice];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::ChatRewrite => "chat_rewrite",
            TaskMode::MultipleChoice => "multiple_choice",
            TaskMode::PronounChoice => "pronoun_choice",
        }
    }

    pub fn is_choice(self) -> bool {
        self != TaskMode::ChatRewrite
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown task mode {s:?} (expected chat_rewrite, multiple_choice or pronoun_choice)"))
    }
}

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("{mode} needs exactly {CHOICE_ARITY} options, got {got}")]
    OptionArity { mode: TaskMode, got: usize },
    #[error("{mode} needs an option list")]
    MissingOptions { mode: TaskMode },
    #[error("template {id}: {message}")]
    Template { id: String, message: String },
    #[error("report has no orientation or unpleasant characteristic")]
    NotBiased,
    #[error("reading template {path}: {message}")]
    Read { path: String, message: String },
}

const SLOTS: [&str; 6] = ["orientation", "unpleasant", "pleasant", "original", "options", "prompt"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(&'static str),
}

/// A parsed instruction template. `{name}` is a slot, `{{` and `}}` are
/// literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    id: String,
    source: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(id: impl Into<String>, source: &str) -> Result<Self, RewriteError> {
        let id = id.into();
        let err = |message: String| RewriteError::Template { id: id.clone(), message };
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|p| p.1) == Some('{') => {
                    chars.next();
                    text.push('{');
                }
                '}' if chars.peek().map(|p| p.1) == Some('}') => {
                    chars.next();
                    text.push('}');
                }
                '{' => {
                    let rest = &source[i + 1..];
                    let end = rest.find('}').ok_or_else(|| err(format!("unclosed brace at byte {i}")))?;
                    let name = &rest[..end];
                    let slot = SLOTS
                        .iter()
                        .find(|s| **s == name)
                        .ok_or_else(|| err(format!("unknown placeholder {{{name}}}")))?;
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(slot));
                    for _ in 0..=name.chars().count() {
                        chars.next();
                    }
                }
                '}' => return Err(err(format!("stray closing brace at byte {i}"))),
                _ => text.push(c),
            }
        }
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(Self { id, source: source.to_string(), pieces })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn uses(&self, slot: &str) -> bool {
        self.pieces.iter().any(|p| matches!(p, Piece::Slot(s) if *s == slot))
    }

    /// Checks that the template carries every slot the mode requires.
    pub fn check_for(&self, mode: TaskMode) -> Result<(), RewriteError> {
        let mut required = vec!["unpleasant", "pleasant"];
        required.push(if mode.is_choice() { "options" } else { "original" });
        for slot in required {
            if !self.uses(slot) {
                return Err(RewriteError::Template {
                    id: self.id.clone(),
                    message: format!("{mode} templates must contain {{{slot}}}"),
                });
            }
        }
        Ok(())
    }

    /// Substitutes slot values in one pass; values are never re-scanned.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> String {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(slots.get(*s).map(String::as_str).unwrap_or("")),
            }
        }
        out
    }
}

const CHAT_REWRITE_V1: &str = "\
The response below shows a bias toward the group \"{orientation}\": it associates them with the characteristic \"{unpleasant}\".
Rewrite the response, substituting the characteristic \"{unpleasant}\" with \"{pleasant}\", while maintaining semantic integrity.
Reply with the rewritten response only.

Response:
{original}";

const MULTIPLE_CHOICE_V1: &str = "\
{prompt}

Your previous answer was:
{original}

That answer shows a bias toward the group \"{orientation}\": it associates them with the characteristic \"{unpleasant}\".
Choose again, substituting the characteristic \"{unpleasant}\" with \"{pleasant}\", while maintaining semantic integrity.
Reply with exactly one of these options and nothing else:
{options}";

const PRONOUN_CHOICE_V1: &str = "\
{prompt}

Your previous answer was:
{original}

That answer shows a bias toward the group \"{orientation}\": it associates them with the characteristic \"{unpleasant}\".
Choose again, substituting the characteristic \"{unpleasant}\" with \"{pleasant}\", while maintaining semantic integrity.
Prefer a gender-neutral pronoun whenever the sentence allows it.
Reply with exactly one of these options and nothing else:
{options}";

/// One template per task mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    by_mode: BTreeMap<TaskMode, Template>,
}

impl Default for Templates {
    fn default() -> Self {
        let mut by_mode = BTreeMap::new();
        for (mode, src) in [
            (TaskMode::ChatRewrite, CHAT_REWRITE_V1),
            (TaskMode::MultipleChoice, MULTIPLE_CHOICE_V1),
            (TaskMode::PronounChoice, PRONOUN_CHOICE_V1),
        ] {
            let t = Template::parse(format!("{mode}.v1"), src).expect("builtin template parses");
            by_mode.insert(mode, t);
        }
        Self { by_mode }
    }
}

impl Templates {
    pub fn get(&self, mode: TaskMode) -> &Template {
        &self.by_mode[&mode]
    }

    pub fn set(&mut self, mode: TaskMode, template: Template) -> Result<(), RewriteError> {
        template.check_for(mode)?;
        self.by_mode.insert(mode, template);
        Ok(())
    }

    /// Built-in templates, overridden by `<mode>.txt` files found in `dir`.
    /// Overrides get the id `<mode>.custom`.
    pub fn load_dir(dir: &Path) -> Result<Self, RewriteError> {
        let mut out = Self::default();
        if !dir.is_dir() {
            return Err(RewriteError::Read { path: dir.display().to_string(), message: "not a directory".into() });
        }
        for mode in TaskMode::ALL {
            let path = dir.join(format!("{mode}.txt"));
            if !path.exists() {
                continue;
            }
            let src = std::fs::read_to_string(&path)
                .map_err(|e| RewriteError::Read { path: path.display().to_string(), message: e.to_string() })?;
            let src = src.strip_suffix('\n').unwrap_or(&src);
            out.set(mode, Template::parse(format!("{mode}.custom"), src)?)?;
        }
        Ok(out)
    }
}

/// Option list as rendered into prompts: `A. first` on separate lines.
pub fn render_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {o}", option_letter(i)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteInstruction {
    pub template_id: String,
    pub rendered_text: String,
    pub slots: BTreeMap<String, String>,
}

fn check_options(mode: TaskMode, options: Option<&[String]>) -> Result<(), RewriteError> {
    match (mode.is_choice(), options) {
        (false, _) => Ok(()),
        (true, None) => Err(RewriteError::MissingOptions { mode }),
        (true, Some(o)) if o.len() != CHOICE_ARITY => Err(RewriteError::OptionArity { mode, got: o.len() }),
        (true, Some(_)) => Ok(()),
    }
}

/// Renders the instruction for `mode`. `prompt` is the task context shown to
/// the model for choice modes.
pub fn build_instruction(
    templates: &Templates,
    report: &BiasReport,
    res: &Resolution,
    mode: TaskMode,
    original: &str,
    prompt: &str,
    options: Option<&[String]>,
) -> Result<RewriteInstruction, RewriteError> {
    check_options(mode, options)?;
    let unpleasant = report.unpleasant.as_ref().ok_or(RewriteError::NotBiased)?;
    let orientation = report.orientation.as_ref().ok_or(RewriteError::NotBiased)?;
    let mut slots = BTreeMap::new();
    slots.insert("orientation".to_string(), orientation.group_id.clone());
    slots.insert("unpleasant".to_string(), unpleasant.word.clone());
    slots.insert("pleasant".to_string(), res.pleasant_word.clone());
    slots.insert("original".to_string(), original.to_string());
    slots.insert("prompt".to_string(), prompt.to_string());
    if let Some(o) = options.filter(|_| mode.is_choice()) {
        slots.insert("options".to_string(), render_options(o));
    }
    let template = templates.get(mode);
    Ok(RewriteInstruction {
        template_id: template.id().to_string(),
        rendered_text: template.render(&slots),
        slots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum PassReason {
    NotOriented,
    NoUnpleasant,
    Degenerate { cosine: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasOutcome {
    pub prompt: String,
    pub mode: TaskMode,
    pub original: String,
    pub report: BiasReport,
    pub resolution: Option<Resolution>,
    pub instruction: Option<RewriteInstruction>,
    pub rewritten: Option<String>,
    pub passed_through: bool,
    pub pass_reason: Option<PassReason>,
    /// Detection rerun on the rewritten text, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recheck: Option<BiasReport>,
}

impl DebiasOutcome {
    /// The rewritten text, or the original when passed through.
    pub fn effective(&self) -> &str {
        self.rewritten.as_deref().unwrap_or(&self.original)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Provider { stage: &'static str, source: ProviderError },
    #[error("{stage}: the model returned an empty response")]
    EmptyResponse { stage: &'static str },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

impl PipelineError {
    pub fn is_provider(&self) -> bool {
        matches!(
            self,
            PipelineError::Provider { .. }
                | PipelineError::EmptyResponse { .. }
                | PipelineError::Detect(DetectError::Provider(_))
        )
    }
}

#[derive(Debug, Clone)]
pub struct DebiasRequest<'a> {
    pub prompt: &'a str,
    pub attribute: &'a str,
    pub mode: TaskMode,
    pub options: Option<&'a [String]>,
}

/// Detect, resolve and rewrite with a single rewrite round.
#[derive(Clone)]
pub struct Pipeline {
    pub lexicon: Arc<Lexicon>,
    pub detection: DetectionConfig,
    pub embedder: Arc<dyn Embedder>,
    pub llm: Arc<dyn ChatModel>,
    pub templates: Templates,
    pub instructions: RoleInstructions,
    pub recheck: bool,
}

impl Pipeline {
    fn generate(&self, stage: &'static str, text: &str) -> Result<String, PipelineError> {
        let reply = self
            .llm
            .generate(&[Message::user(text)])
            .map_err(|source| PipelineError::Provider { stage, source })?;
        if reply.trim().is_empty() {
            return Err(PipelineError::EmptyResponse { stage });
        }
        Ok(reply)
    }

    /// Asks the model the prompt, then debiases its answer.
    pub fn debias(&self, req: &DebiasRequest<'_>) -> Result<DebiasOutcome, PipelineError> {
        check_options(req.mode, req.options)?;
        let original = self.generate("initial response", req.prompt)?;
        self.debias_response(req, original)
    }

    /// Debiases an answer the model already gave to `req.prompt`.
    pub fn debias_response(&self, req: &DebiasRequest<'_>, original: String) -> Result<DebiasOutcome, PipelineError> {
        check_options(req.mode, req.options)?;
        let report = detect(
            &original,
            req.attribute,
            &self.lexicon,
            &self.detection,
            self.embedder.as_ref(),
            &self.instructions,
        )?;
        let mut outcome = DebiasOutcome {
            prompt: req.prompt.to_string(),
            mode: req.mode,
            original,
            report,
            resolution: None,
            instruction: None,
            rewritten: None,
            passed_through: true,
            pass_reason: None,
            recheck: None,
        };
        if outcome.report.orientation.is_none() {
            outcome.pass_reason = Some(PassReason::NotOriented);
            return Ok(outcome);
        }
        if outcome.report.unpleasant.is_none() {
            outcome.pass_reason = Some(PassReason::NoUnpleasant);
            return Ok(outcome);
        }
        let resolution = match resolve(&outcome.report, &self.lexicon, &self.detection) {
            Ok(r) => r,
            Err(ResolveError::NoResolution(GeometryError::Degenerate { cosine, .. })) => {
                outcome.pass_reason = Some(PassReason::Degenerate { cosine });
                return Ok(outcome);
            }
            Err(e) => return Err(e.into()),
        };
        let instruction = build_instruction(
            &self.templates,
            &outcome.report,
            &resolution,
            req.mode,
            &outcome.original,
            req.prompt,
            req.options,
        )?;
        let rewritten = self.generate("rewrite", &instruction.rendered_text)?;
        if self.recheck {
            outcome.recheck = Some(detect(
                &rewritten,
                req.attribute,
                &self.lexicon,
                &self.detection,
                self.embedder.as_ref(),
                &self.instructions,
            )?);
        }
        outcome.resolution = Some(resolution);
        outcome.instruction = Some(instruction);
        outcome.rewritten = Some(rewritten);
        outcome.passed_through = false;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{Orientation, Unpleasant};
    use crate::geometry::Embedding;

    fn report() -> BiasReport {
        BiasReport {
            attribute: "gender".into(),
            response_text: "r".into(),
            response_embedding: Embedding::new(vec![1.0, 0.0]).unwrap(),
            orientation: Some(Orientation { group_id: "male".into(), similarity: 0.9 }),
            unpleasant: Some(Unpleasant {
                word: "manpower".into(),
                similarity: 0.9,
                embedding: Embedding::new(vec![0.0, 1.0]).unwrap(),
            }),
            all_group_similarities: vec![],
        }
    }

    fn resolution() -> Resolution {
        Resolution {
            repair_vector: Embedding::new(vec![-2.0, 0.0]).unwrap(),
            pleasant_word: "equality".into(),
            pleasant_similarity: 1.0,
            group_id: "male".into(),
        }
    }

    fn opts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chat_instruction_carries_words_and_original() {
        let original = "The CEO went to the tailor because he needed a suit";
        let i = build_instruction(&Templates::default(), &report(), &resolution(), TaskMode::ChatRewrite, original, "", None)
            .unwrap();
        assert_eq!(i.template_id, "chat_rewrite.v1");
        for s in ["manpower", "equality", original, "male", "maintaining semantic integrity"] {
            assert!(i.rendered_text.contains(s), "missing {s}");
        }
    }

    #[test]
    fn pronoun_instruction_lists_three_options() {
        let o = opts(&["He/his", "She/her", "They/them"]);
        let i = build_instruction(
            &Templates::default(),
            &report(),
            &resolution(),
            TaskMode::PronounChoice,
            "He/his",
            "Fill the blank.",
            Some(&o),
        )
        .unwrap();
        assert!(i.rendered_text.contains("A. He/his\nB. She/her\nC. They/them"));
        assert!(i.rendered_text.contains("gender-neutral"));
        assert_eq!(i.rendered_text.matches(". They/them").count(), 1);
    }

    #[test]
    fn choice_arity() {
        let two = opts(&["a", "b"]);
        let r = build_instruction(&Templates::default(), &report(), &resolution(), TaskMode::MultipleChoice, "a", "", Some(&two));
        assert!(matches!(r, Err(RewriteError::OptionArity { got: 2, .. })));
        let r = build_instruction(&Templates::default(), &report(), &resolution(), TaskMode::MultipleChoice, "a", "", None);
        assert!(matches!(r, Err(RewriteError::MissingOptions { .. })));
    }

    #[test]
    fn rendering_is_single_pass() {
        let t = Template::parse("t", "[{unpleasant}] [{pleasant}] {{lit}} {original}").unwrap();
        let mut slots = BTreeMap::new();
        slots.insert("unpleasant".to_string(), "{pleasant}".to_string());
        slots.insert("pleasant".to_string(), "p".to_string());
        slots.insert("original".to_string(), "o".to_string());
        assert_eq!(t.render(&slots), "[{pleasant}] [p] {lit} o");
    }

    #[test]
    fn template_validation() {
        assert!(Template::parse("t", "{nope}").is_err());
        assert!(Template::parse("t", "{unclosed").is_err());
        assert!(Template::parse("t", "stray }").is_err());
        let t = Template::parse("t", "{unpleasant} {pleasant}").unwrap();
        assert!(t.check_for(TaskMode::ChatRewrite).is_err());
        for mode in TaskMode::ALL {
            Templates::default().get(mode).check_for(mode).unwrap();
        }
    }

    #[test]
    fn template_dir_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("chat_rewrite.txt"), "Swap {unpleasant} for {pleasant}: {original}\n").unwrap();
        let t = Templates::load_dir(dir.path()).unwrap();
        assert_eq!(t.get(TaskMode::ChatRewrite).id(), "chat_rewrite.custom");
        assert_eq!(t.get(TaskMode::PronounChoice).id(), "pronoun_choice.v1");
        std::fs::write(dir.path().join("multiple_choice.txt"), "{unpleasant} {pleasant}").unwrap();
        assert!(Templates::load_dir(dir.path()).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in TaskMode::ALL {
            assert_eq!(m.as_str().parse::<TaskMode>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.as_str());
        }
        assert!("other".parse::<TaskMode>().is_err());
    }
}
