use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rewriter::PassReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Error,
    Cancelled,
}

/// Audit trail for one dataset instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub index: usize,
    pub id: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed_through: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_reason: Option<PassReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unpleasant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pleasant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    /// Parsed answer (choice tasks) before and after the rewrite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

impl AuditRow {
    pub fn new(index: usize, id: &str, attribute: &str, split: Option<&str>) -> Self {
        Self {
            index,
            id: id.to_string(),
            attribute: attribute.to_string(),
            split: split.map(str::to_string),
            status: RowStatus::Ok,
            error: None,
            prompt: None,
            original: None,
            rewritten: None,
            passed_through: None,
            pass_reason: None,
            orientation: None,
            unpleasant: None,
            pleasant: None,
            template_id: None,
            before: None,
            after: None,
            scores: BTreeMap::new(),
            labels: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub model_id: String,
    pub embedding_model_id: String,
    pub attribute: String,
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub truncated: bool,
    pub per_instance: Vec<AuditRow>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Aligned-columns summary; percentages and scores with 2 decimals,
    /// proportions with 3.
    pub fn render_table(&self) -> String {
        let pct = |name: &str| self.metric(name).map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
        let prop = |name: &str| self.metric(name).map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
        let mut out = format!(
            "task: {}  model: {}  attribute: {}{}\n\n",
            self.task,
            self.model_id,
            self.attribute,
            if self.truncated { "  (TRUNCATED)" } else { "" }
        );
        match self.task.as_str() {
            "stereoset" => {
                out.push_str(&columns(
                    &["Attribute", "Model", "SS before", "SS after", "SS reduction"],
                    &[vec![
                        self.attribute.clone(),
                        self.model_id.clone(),
                        pct("ss_before"),
                        pct("ss_after"),
                        pct("ss_reduction"),
                    ]],
                ));
            }
            "winobias" => {
                let mut rows = Vec::new();
                let mut prefixes = vec![String::new()];
                let mut splits: Vec<String> = self
                    .metrics
                    .keys()
                    .filter_map(|k| k.strip_suffix(".male_before").map(str::to_string))
                    .collect();
                splits.sort();
                prefixes.extend(splits.into_iter().map(|s| format!("{s}.")));
                for p in prefixes {
                    let scope = if p.is_empty() { "pooled".to_string() } else { p.trim_end_matches('.').to_string() };
                    for (stage, suffix) in [("original", "before"), ("rewrite", "after")] {
                        rows.push(vec![
                            format!("{}-{stage}", self.model_id),
                            scope.clone(),
                            prop(&format!("{p}male_{suffix}")),
                            prop(&format!("{p}female_{suffix}")),
                            prop(&format!("{p}neutral_{suffix}")),
                        ]);
                    }
                }
                out.push_str(&columns(&["Group", "Split", "Male", "Female", "Neutral"], &rows));
            }
            "bold" => {
                let mut rows = Vec::new();
                for (stage, suffix) in [("original", "before"), ("rewrite", "after")] {
                    rows.push(vec![
                        format!("{}-{stage}", self.model_id),
                        prop(&format!("regard_positive_{suffix}")),
                        prop(&format!("regard_negative_{suffix}")),
                        prop(&format!("sentiment_positive_{suffix}")),
                        prop(&format!("sentiment_negative_{suffix}")),
                        self.metric(&format!("toxicity_{suffix}"))
                            .map(|v| format!("{:.2}", v * 100.0))
                            .unwrap_or_else(|| "n/a".into()),
                    ]);
                }
                out.push_str(&columns(
                    &["Group", "Regard +", "Regard -", "Sentiment +", "Sentiment -", "Toxicity (0-100)"],
                    &rows,
                ));
                out.push_str(&format!("\ntoxicity reduction: {}%\n", pct("toxicity_reduction")));
            }
            _ => {}
        }
        out.push('\n');
        let counts: Vec<Vec<String>> = self.counts.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect();
        out.push_str(&columns(&["Count", "Value"], &counts));
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}

/// Left-aligned columns separated by two spaces.
pub fn columns(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let s: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align() {
        let t = columns(&["a", "bbb"], &[vec!["long".into(), "x".into()]]);
        assert_eq!(t, "a     bbb\n----  ---\nlong  x\n");
    }

    #[test]
    fn precision() {
        let mut r = MetricReport {
            task: "stereoset".into(),
            model_id: "m".into(),
            embedding_model_id: "e".into(),
            attribute: "gender".into(),
            metrics: BTreeMap::new(),
            counts: BTreeMap::new(),
            notes: vec![],
            truncated: false,
            per_instance: vec![],
        };
        r.metrics.insert("ss_before".into(), 62.2857);
        r.metrics.insert("ss_after".into(), 54.13);
        r.metrics.insert("ss_reduction".into(), 8.1557);
        let t = r.render_table();
        assert!(t.contains("62.29"));
        assert!(t.contains("8.16"));
        r.task = "winobias".into();
        r.metrics.insert("male_before".into(), 0.0704);
        assert!(r.render_table().contains("0.070"));
    }
}
