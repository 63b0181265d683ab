#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use debiaser_core::detector::DetectionConfig;
use debiaser_core::eval::EvalContext;
use debiaser_core::geometry::Embedding;
use debiaser_core::lexicon::{
    load_lexicon, AttributeRecord, EntryRecord, GroupRecord, Lexicon, LexiconFile, Polarity,
};
use debiaser_core::providers::{
    ChatModel, Embedder, EmbeddingRequest, FixtureClassifier, FixtureEmbedder, Message, ProviderError,
    RoleInstructions, RuleChat,
};
use debiaser_core::rewriter::{Pipeline, Templates};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_lexicon() -> Arc<Lexicon> {
    Arc::new(load_lexicon(&fixtures().join("lexicon.json")).expect("fixture lexicon"))
}

pub fn pipeline_with(llm: Arc<dyn ChatModel>, recheck: bool) -> Pipeline {
    Pipeline {
        lexicon: fixture_lexicon(),
        detection: DetectionConfig::default(),
        embedder: Arc::new(FixtureEmbedder::open(&fixtures().join("embeddings.jsonl")).unwrap()),
        llm,
        templates: Templates::default(),
        instructions: RoleInstructions::default(),
        recheck,
    }
}

pub fn rules() -> Arc<RuleChat> {
    Arc::new(RuleChat::open(&fixtures().join("chat_rules.json")).unwrap())
}

pub fn fixture_context() -> EvalContext {
    EvalContext {
        pipeline: pipeline_with(rules(), false),
        classifier: Some(Arc::new(FixtureClassifier::open(&fixtures().join("classifier.json")).unwrap())),
    }
}

/// Counts calls to the wrapped chat model.
pub struct Counting<C> {
    pub inner: C,
    pub calls: AtomicUsize,
}

impl<C> Counting<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: ChatModel> ChatModel for Counting<C> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn generate(&self, messages: &[Message]) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(messages)
    }
}

/// Returns one vector for every text.
pub struct ConstEmbedder {
    pub model: String,
    pub vector: Vec<f64>,
}

impl Embedder for ConstEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> Option<usize> {
        Some(self.vector.len())
    }

    fn embed(&self, requests: &[EmbeddingRequest]) -> Result<Vec<Embedding>, ProviderError> {
        Ok(requests.iter().map(|_| Embedding::new(self.vector.clone()).unwrap()).collect())
    }
}

/// One attribute with groups `a` and `b`; each group gets the given
/// unpleasant and pleasant vectors.
#[derive(Debug, Clone)]
pub struct SmallLexicon {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_minus: Vec<Vec<f64>>,
    pub a_plus: Vec<Vec<f64>>,
    pub b_minus: Vec<Vec<f64>>,
    pub b_plus: Vec<Vec<f64>>,
}

impl SmallLexicon {
    pub fn build(&self) -> Lexicon {
        let dim = self.a.len();
        let mut entries = Vec::new();
        let mut push = |group: &str, polarity: Polarity, vs: &[Vec<f64>], tag: &str| {
            for (i, v) in vs.iter().enumerate() {
                entries.push(EntryRecord {
                    word: format!("{group}-{tag}{i}"),
                    group_id: group.into(),
                    polarity: polarity.clone(),
                    vector: Some(v.clone()),
                });
            }
        };
        push("a", Polarity::Unpleasant, &self.a_minus, "minus");
        push("a", Polarity::Pleasant, &self.a_plus, "plus");
        push("b", Polarity::Unpleasant, &self.b_minus, "minus");
        push("b", Polarity::Pleasant, &self.b_plus, "plus");
        let file = LexiconFile {
            embedding_model_id: "test".into(),
            dim,
            template: "This is {}".into(),
            attributes: vec![AttributeRecord {
                name: "attr".into(),
                groups: vec![
                    GroupRecord { id: "a".into(), surface_text: "group a".into(), vector: Some(self.a.clone()) },
                    GroupRecord { id: "b".into(), surface_text: "group b".into(), vector: Some(self.b.clone()) },
                ],
            }],
            entries,
        };
        Lexicon::from_file(file, None).expect("small lexicon is valid")
    }
}

pub const CEO_PROMPT: &str = "Write one sentence about a CEO who needs new clothes.";
pub const CEO_SENTENCE: &str = "The CEO went to the tailor because he needed a suit";
