use std::path::Path;

use debiaser_core::detector::{BiasReport, GroupSimilarity, Orientation};
use debiaser_core::lexicon::Violation;
use debiaser_core::rewriter::{DebiasOutcome, PassReason, TaskMode};
use serde::Serialize;

pub fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("view serializes")
}

#[derive(Serialize)]
pub struct WordView {
    pub word: String,
    pub similarity: f64,
}

/// A detection report without the vectors.
#[derive(Serialize)]
pub struct ReportView {
    pub attribute: String,
    pub text: String,
    pub group_similarities: Vec<GroupSimilarity>,
    pub orientation: Option<Orientation>,
    pub unpleasant: Option<WordView>,
    pub biased: bool,
}

impl From<&BiasReport> for ReportView {
    fn from(r: &BiasReport) -> Self {
        Self {
            attribute: r.attribute.clone(),
            text: r.response_text.clone(),
            group_similarities: r.all_group_similarities.clone(),
            orientation: r.orientation.clone(),
            unpleasant: r.unpleasant.as_ref().map(|u| WordView { word: u.word.clone(), similarity: u.similarity }),
            biased: r.is_biased(),
        }
    }
}

#[derive(Serialize)]
pub struct OutcomeView {
    pub prompt: String,
    pub mode: TaskMode,
    pub original: String,
    pub detection: ReportView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pleasant: Option<WordView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewritten: Option<String>,
    pub passed_through: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_reason: Option<PassReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recheck: Option<ReportView>,
    pub output: String,
}

impl From<&DebiasOutcome> for OutcomeView {
    fn from(o: &DebiasOutcome) -> Self {
        Self {
            prompt: o.prompt.clone(),
            mode: o.mode,
            original: o.original.clone(),
            detection: ReportView::from(&o.report),
            pleasant: o
                .resolution
                .as_ref()
                .map(|r| WordView { word: r.pleasant_word.clone(), similarity: r.pleasant_similarity }),
            template_id: o.instruction.as_ref().map(|i| i.template_id.clone()),
            instruction: o.instruction.as_ref().map(|i| i.rendered_text.clone()),
            rewritten: o.rewritten.clone(),
            passed_through: o.passed_through,
            pass_reason: o.pass_reason.clone(),
            recheck: o.recheck.as_ref().map(ReportView::from),
            output: o.effective().to_string(),
        }
    }
}

fn detection_lines(r: &BiasReport, out: &mut String) {
    out.push_str(&format!("attribute: {}\n", r.attribute));
    out.push_str("group similarities:\n");
    let width = r.all_group_similarities.iter().map(|g| g.group_id.chars().count()).max().unwrap_or(0);
    for g in &r.all_group_similarities {
        out.push_str(&format!("  {:<width$}  {:.4}\n", g.group_id, g.similarity));
    }
    match &r.orientation {
        Some(o) => out.push_str(&format!("orientation: {} ({:.4})\n", o.group_id, o.similarity)),
        None => out.push_str("orientation: none\n"),
    }
    match &r.unpleasant {
        Some(u) => out.push_str(&format!("unpleasant: {} ({:.4})\n", u.word, u.similarity)),
        None => out.push_str("unpleasant: none\n"),
    }
}

pub fn report(r: &BiasReport) -> String {
    let mut out = format!("text: {}\n", r.response_text);
    detection_lines(r, &mut out);
    out.push_str(if r.is_biased() { "verdict: biased\n" } else { "verdict: not biased\n" });
    out
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}

pub fn pass_reason(reason: &PassReason) -> String {
    match reason {
        PassReason::NotOriented => "no group reached the orientation threshold".into(),
        PassReason::NoUnpleasant => "no unpleasant characteristic reached the threshold".into(),
        PassReason::Degenerate { cosine } => {
            format!("response and characteristic are (anti)parallel, cosine {cosine:.6}; no repair direction")
        }
    }
}

pub fn outcome(o: &DebiasOutcome) -> String {
    let mut out = format!("prompt: {}\nmode: {}\noriginal: {}\n", o.prompt, o.mode, o.original);
    detection_lines(&o.report, &mut out);
    if o.passed_through {
        let why = o.pass_reason.as_ref().map(pass_reason).unwrap_or_default();
        out.push_str(&format!("PASSED THROUGH: {why}; the original response is returned unchanged\n"));
        out.push_str(&format!("output: {}\n", o.original));
        return out;
    }
    if let Some(r) = &o.resolution {
        out.push_str(&format!("pleasant: {} ({:.4})\n", r.pleasant_word, r.pleasant_similarity));
    }
    if let Some(i) = &o.instruction {
        out.push_str(&format!("template: {}\ninstruction:\n{}", i.template_id, indent(&i.rendered_text)));
    }
    out.push_str(&format!("rewritten: {}\n", o.effective()));
    if let Some(r) = &o.recheck {
        match (&r.orientation, &r.unpleasant) {
            (Some(g), Some(u)) => out.push_str(&format!("recheck: still biased ({} / {})\n", g.group_id, u.word)),
            _ => out.push_str("recheck: not biased\n"),
        }
    }
    out
}

pub fn violations(path: &Path, v: &[Violation]) -> String {
    let mut out = format!("{}: {} violation(s)\n", path.display(), v.len());
    for x in v {
        out.push_str(&format!("  {}: {}\n", x.location, x.message));
    }
    out
}
