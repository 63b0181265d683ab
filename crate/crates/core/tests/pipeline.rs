mod common;

use std::sync::Arc;

use common::*;
use debiaser_core::detector::DetectionConfig;
use debiaser_core::providers::{EchoChat, RoleInstructions, RuleChat, ScriptedChat};
use debiaser_core::rewriter::{
    DebiasRequest, PassReason, Pipeline, PipelineError, RewriteError, TaskMode, Templates,
};

fn chat(prompt: &str) -> DebiasRequest<'_> {
    DebiasRequest { prompt, attribute: "gender", mode: TaskMode::ChatRewrite, options: None }
}

#[test]
fn ceo_story_is_rewritten_toward_equality() {
    let llm = Arc::new(Counting::new(RuleChat::open(&fixtures().join("chat_rules.json")).unwrap()));
    let p = pipeline_with(llm.clone(), false);
    let out = p.debias(&chat(CEO_PROMPT)).unwrap();
    assert_eq!(out.original, CEO_SENTENCE);
    assert_eq!(out.report.orientation.as_ref().unwrap().group_id, "male");
    assert_eq!(out.report.unpleasant.as_ref().unwrap().word, "manpower");
    let res = out.resolution.as_ref().unwrap();
    assert_eq!(res.pleasant_word, "equality");
    let inst = out.instruction.as_ref().unwrap();
    assert_eq!(inst.template_id, "chat_rewrite.v1");
    for needle in ["manpower", "equality", CEO_SENTENCE] {
        assert!(inst.rendered_text.contains(needle), "instruction lacks {needle:?}");
    }
    assert!(!out.passed_through);
    assert!(out.rewritten.as_deref().unwrap().contains("they needed a suit"));
    assert_eq!(llm.calls(), 2);
}

#[test]
fn unoriented_response_passes_through_after_one_call() {
    let llm = Arc::new(Counting::new(RuleChat::open(&fixtures().join("chat_rules.json")).unwrap()));
    let p = pipeline_with(llm.clone(), false);
    let prompt = "Complete the following text: Laura Kemp is an American television host who";
    let out = p.debias(&chat(prompt)).unwrap();
    assert!(out.passed_through);
    assert_eq!(out.pass_reason, Some(PassReason::NotOriented));
    assert_eq!(out.effective(), out.original);
    assert!(out.rewritten.is_none() && out.instruction.is_none() && out.resolution.is_none());
    assert_eq!(llm.calls(), 1);
}

#[test]
fn oriented_response_without_unpleasant_word_passes_through() {
    let p = pipeline_with(rules(), false);
    let original = "He insisted on paying for dinner too.".to_string();
    let out = p.debias_response(&chat("anything"), original.clone()).unwrap();
    assert_eq!(out.report.orientation.as_ref().unwrap().group_id, "male");
    assert_eq!(out.pass_reason, Some(PassReason::NoUnpleasant));
    assert_eq!(out.effective(), original);
}

#[test]
fn degenerate_geometry_passes_through() {
    let minus = vec![1.0, 0.0, 0.0];
    let lex = SmallLexicon {
        a: vec![1.0, 0.1, 0.0],
        b: vec![0.0, 0.0, 1.0],
        a_minus: vec![minus.clone()],
        a_plus: vec![vec![0.0, 1.0, 0.0]],
        b_minus: vec![vec![0.0, 0.3, 1.0]],
        b_plus: vec![vec![0.0, 1.0, 0.2]],
    }
    .build();
    let llm = Arc::new(Counting::new(ScriptedChat::new(["an answer"])));
    let p = Pipeline {
        lexicon: Arc::new(lex),
        detection: DetectionConfig::default(),
        embedder: Arc::new(ConstEmbedder { model: "test".into(), vector: minus.iter().map(|x| x * 3.0).collect() }),
        llm: llm.clone(),
        templates: Templates::default(),
        instructions: RoleInstructions::none(),
        recheck: false,
    };
    let req = DebiasRequest { prompt: "q", attribute: "attr", mode: TaskMode::ChatRewrite, options: None };
    let out = p.debias(&req).unwrap();
    assert!(out.report.is_biased());
    assert!(matches!(out.pass_reason, Some(PassReason::Degenerate { cosine }) if cosine > 0.999));
    assert_eq!(out.effective(), "an answer");
    assert_eq!(llm.calls(), 1);
}

#[test]
fn echo_model_returns_the_instruction_after_a_single_round() {
    let p = pipeline_with(Arc::new(EchoChat), false);
    let out = p.debias_response(&chat(CEO_PROMPT), CEO_SENTENCE.into()).unwrap();
    assert_eq!(out.rewritten.as_deref(), Some(out.instruction.as_ref().unwrap().rendered_text.as_str()));
}

#[test]
fn empty_reply_is_a_provider_error() {
    let p = pipeline_with(Arc::new(ScriptedChat::new([CEO_SENTENCE, "   "])), false);
    let err = p.debias(&chat(CEO_PROMPT)).unwrap_err();
    assert!(matches!(err, PipelineError::EmptyResponse { stage: "rewrite" }));
    assert!(err.is_provider());
}

#[test]
fn exhausted_model_is_a_provider_error() {
    let p = pipeline_with(Arc::new(ScriptedChat::new(Vec::<String>::new())), false);
    assert!(p.debias(&chat(CEO_PROMPT)).unwrap_err().is_provider());
}

#[test]
fn choice_modes_check_arity_before_calling_the_model() {
    let llm = Arc::new(Counting::new(EchoChat));
    let p = pipeline_with(llm.clone(), false);
    let two = vec!["He/his".to_string(), "She/her".to_string()];
    let req = DebiasRequest { prompt: "q", attribute: "gender", mode: TaskMode::PronounChoice, options: Some(&two) };
    assert!(matches!(
        p.debias(&req),
        Err(PipelineError::Rewrite(RewriteError::OptionArity { got: 2, .. }))
    ));
    assert_eq!(llm.calls(), 0);
}

#[test]
fn recheck_detects_on_the_rewrite() {
    let p = pipeline_with(rules(), true);
    let out = p.debias(&chat(CEO_PROMPT)).unwrap();
    let again = out.recheck.as_ref().expect("recheck ran");
    assert_eq!(again.response_text, out.effective());
    assert!(!again.is_biased());
    let off = pipeline_with(rules(), false).debias(&chat(CEO_PROMPT)).unwrap();
    assert!(off.recheck.is_none());
}

#[test]
fn choice_instruction_lists_the_options() {
    let p = pipeline_with(Arc::new(EchoChat), false);
    let options: Vec<String> = ["He/his", "She/her", "They/them"].map(String::from).to_vec();
    let req = DebiasRequest { prompt: "Fill the blank", attribute: "gender", mode: TaskMode::PronounChoice, options: Some(&options) };
    let out = p.debias_response(&req, "He/his".into()).unwrap();
    let text = &out.instruction.as_ref().unwrap().rendered_text;
    assert!(text.contains("A. He/his\nB. She/her\nC. They/them"), "{text}");
    assert_eq!(out.instruction.as_ref().unwrap().template_id, "pronoun_choice.v1");
}

#[test]
fn repeated_runs_serialize_identically() {
    let run = || {
        let out = pipeline_with(rules(), true).debias(&chat(CEO_PROMPT)).unwrap();
        serde_json::to_string(&out).unwrap()
    };
    assert_eq!(run(), run());
}
