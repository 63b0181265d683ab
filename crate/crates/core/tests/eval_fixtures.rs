mod common;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use common::*;
use debiaser_core::eval::{
    load_dataset, run_eval, AuditRow, Dataset, EvalContext, EvalError, EvalOptions, RowStatus, Task,
};
use debiaser_core::providers::ScriptedChat;

fn dataset(task: Task) -> Dataset {
    let name = match task {
        Task::StereoSet => "stereoset.jsonl",
        Task::WinoBias => "winobias.jsonl",
        Task::Bold => "bold.jsonl",
    };
    load_dataset(task, &fixtures().join(name), None).unwrap()
}

fn opts(workers: usize) -> EvalOptions {
    EvalOptions { workers, seed: 11, ..EvalOptions::default() }
}

fn count(rows: &[AuditRow], stage: fn(&AuditRow) -> Option<&String>, label: &str) -> usize {
    rows.iter().filter(|r| stage(r).map(String::as_str) == Some(label)).count()
}

fn before(r: &AuditRow) -> Option<&String> {
    r.before.as_ref()
}

fn after(r: &AuditRow) -> Option<&String> {
    r.after.as_ref()
}

#[test]
fn stereoset_metrics_match_the_audit_rows() {
    let report = run_eval(&dataset(Task::StereoSet), &fixture_context(), &opts(4)).unwrap();
    let rows = &report.per_instance;
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.status == RowStatus::Ok));
    let ss = |stage| {
        let s = count(rows, stage, "stereotype") as f64;
        let a = count(rows, stage, "anti_stereotype") as f64;
        100.0 * s / (s + a)
    };
    let (b, a) = (ss(before), ss(after));
    assert!((report.metric("ss_before").unwrap() - b).abs() < 1e-9);
    assert!((report.metric("ss_after").unwrap() - a).abs() < 1e-9);
    assert!((report.metric("ss_reduction").unwrap() - (b - a)).abs() < 1e-9);
    assert!((b - 700.0 / 9.0).abs() < 1e-9, "{b}");
    assert!((a - 200.0 / 9.0).abs() < 1e-9, "{a}");
    for r in rows.iter().filter(|r| r.passed_through == Some(true)) {
        assert_eq!(r.before, r.after, "{}", r.id);
        assert!(r.rewritten.is_none());
    }
    assert_eq!(report.counts["rewritten"] + report.counts["passed_through"], 20);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let ctx = fixture_context();
    for task in [Task::StereoSet, Task::WinoBias, Task::Bold] {
        let data = dataset(task);
        let one = run_eval(&data, &ctx, &opts(1)).unwrap().to_json();
        let many = run_eval(&data, &ctx, &opts(8)).unwrap().to_json();
        assert_eq!(one, many, "{task:?}");
    }
}

#[test]
fn option_order_does_not_change_stereoset_scores() {
    let ctx = fixture_context();
    let data = dataset(Task::StereoSet);
    let a = run_eval(&data, &ctx, &EvalOptions { seed: 1, ..opts(2) }).unwrap();
    let b = run_eval(&data, &ctx, &EvalOptions { seed: 2, ..opts(2) }).unwrap();
    let c = run_eval(&data, &ctx, &EvalOptions { shuffle_options: false, ..opts(2) }).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.metrics, c.metrics);
    assert!(a.per_instance.iter().zip(&c.per_instance).any(|(x, y)| x.prompt != y.prompt));
}

#[test]
fn winobias_proportions_sum_to_one_pooled_and_per_split() {
    let report = run_eval(&dataset(Task::WinoBias), &fixture_context(), &opts(4)).unwrap();
    let rows = &report.per_instance;
    let mut prefixes = vec![String::new()];
    for split in ["pro_type1", "anti_type1", "pro_type2", "anti_type2"] {
        prefixes.push(format!("{split}."));
    }
    for p in &prefixes {
        for stage in ["before", "after"] {
            let sum: f64 = ["male", "female", "neutral"]
                .iter()
                .map(|c| report.metric(&format!("{p}{c}_{stage}")).unwrap())
                .sum();
            assert!((sum - 1.0).abs() < 1e-9, "{p}{stage}: {sum}");
        }
    }
    for (stage, f) in [("before", before as fn(&AuditRow) -> Option<&String>), ("after", after)] {
        for c in ["male", "female", "neutral"] {
            let expected = count(rows, f, c) as f64 / rows.len() as f64;
            assert!((report.metric(&format!("{c}_{stage}")).unwrap() - expected).abs() < 1e-12);
        }
    }
    assert!(report.metric("neutral_after").unwrap() > report.metric("neutral_before").unwrap());
}

#[test]
fn bold_toxicity_is_relative_to_the_original_mean() {
    let report = run_eval(&dataset(Task::Bold), &fixture_context(), &opts(4)).unwrap();
    let rows = &report.per_instance;
    let mean = |k: &str| rows.iter().map(|r| r.scores[k]).sum::<f64>() / rows.len() as f64;
    let (b, a) = (mean("toxicity_before"), mean("toxicity_after"));
    assert!((report.metric("toxicity_before").unwrap() - b).abs() < 1e-12);
    assert!((report.metric("toxicity_after").unwrap() - a).abs() < 1e-12);
    assert!((report.metric("toxicity_reduction").unwrap() - 100.0 * (b - a) / b).abs() < 1e-9);
    for r in rows.iter().filter(|r| r.passed_through == Some(true)) {
        assert_eq!(r.scores["toxicity_before"], r.scores["toxicity_after"]);
    }
    let pos = report.metric("regard_positive_after").unwrap();
    let neg = report.metric("regard_negative_after").unwrap();
    assert!(pos + neg <= 1.0 + 1e-12);
}

#[test]
fn bold_without_classifier_fails_before_generation() {
    let llm = Arc::new(Counting::new(ScriptedChat::new(["x"])));
    let ctx = EvalContext { pipeline: pipeline_with(llm.clone(), false), classifier: None };
    let err = run_eval(&dataset(Task::Bold), &ctx, &opts(2)).unwrap_err();
    assert!(matches!(err, EvalError::MissingClassifier(_)), "{err}");
    assert!(err.to_string().contains("toxicity"));
    assert_eq!(llm.calls(), 0);
}

#[test]
fn cancellation_marks_rows_and_truncates() {
    let cancel = Arc::new(AtomicBool::new(true));
    let o = EvalOptions { cancel: Some(cancel), ..opts(2) };
    let report = run_eval(&dataset(Task::StereoSet), &fixture_context(), &o).unwrap();
    assert!(report.truncated);
    assert!(report.per_instance.iter().all(|r| r.status == RowStatus::Cancelled));
    assert_eq!(report.per_instance.len(), 20);
}

#[test]
fn error_budget_is_enforced_with_the_partial_report() {
    let ctx = EvalContext { pipeline: pipeline_with(Arc::new(ScriptedChat::new(Vec::<String>::new())), false), classifier: None };
    match run_eval(&dataset(Task::StereoSet), &ctx, &opts(2)) {
        Err(EvalError::TooManyErrors { errors, attempted, report, .. }) => {
            assert_eq!((errors, attempted), (20, 20));
            assert!(report.per_instance.iter().all(|r| r.status == RowStatus::Error && r.error.is_some()));
        }
        other => panic!("{:?}", other.map(|r| r.counts)),
    }
}

#[test]
fn attribute_filter() {
    let ctx = fixture_context();
    let data = dataset(Task::StereoSet);
    let race = run_eval(&data, &ctx, &EvalOptions { attribute: Some("race".into()), ..opts(2) }).unwrap();
    assert_eq!(race.per_instance.len(), 6);
    assert!(race.per_instance.iter().all(|r| r.attribute == "race"));
    assert_eq!(race.counts["filtered"], 14);
    let err = run_eval(&data, &ctx, &EvalOptions { attribute: Some("age".into()), ..opts(2) }).unwrap_err();
    assert!(matches!(err, EvalError::UnknownAttribute(_)));
}
