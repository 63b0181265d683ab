//! Process exit codes and the error type carrying them.

use std::fmt;

use debiaser_core::detector::DetectError;
use debiaser_core::eval::EvalError;
use debiaser_core::lexicon::LexiconError;
use debiaser_core::providers::ProviderError;
use debiaser_core::resolver::ResolveError;
use debiaser_core::rewriter::{PipelineError, RewriteError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    /// Lexicon violations, or an evaluation over its error budget.
    Failed = 1,
    Usage = 2,
    Config = 3,
    Provider = 4,
    Input = 5,
    Interrupted = 130,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

impl Failure {
    pub fn new(exit: Exit, message: impl ToString) -> Self {
        Self { exit, message: message.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ProviderError> for Failure {
    fn from(e: ProviderError) -> Self {
        let exit = match e {
            ProviderError::File { .. } | ProviderError::MissingCredential(_) => Exit::Config,
            ProviderError::EmptyText { .. } => Exit::Input,
            _ => Exit::Provider,
        };
        Failure::new(exit, e)
    }
}

impl From<LexiconError> for Failure {
    fn from(e: LexiconError) -> Self {
        let exit = match e {
            LexiconError::UnknownGroup(_) | LexiconError::UnknownAttribute(_) => Exit::Input,
            LexiconError::Provider(_) => Exit::Provider,
            _ => Exit::Config,
        };
        Failure::new(exit, e)
    }
}

impl From<DetectError> for Failure {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Provider(p) => p.into(),
            DetectError::Lexicon(l) => l.into(),
            DetectError::Config(_) => Failure::new(Exit::Config, e),
            _ => Failure::new(Exit::Input, e),
        }
    }
}

impl From<RewriteError> for Failure {
    fn from(e: RewriteError) -> Self {
        let exit = match e {
            RewriteError::Template { .. } | RewriteError::Read { .. } => Exit::Config,
            _ => Exit::Input,
        };
        Failure::new(exit, e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_provider() {
            return Failure::new(Exit::Provider, e);
        }
        match e {
            PipelineError::Detect(d) => d.into(),
            PipelineError::Rewrite(r) => r.into(),
            PipelineError::Resolve(ResolveError::Lexicon(l)) => l.into(),
            other => Failure::new(Exit::Input, other),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let exit = match e {
            EvalError::MissingClassifier(_) => Exit::Config,
            EvalError::Pool(_) => Exit::Failed,
            EvalError::TooManyErrors { .. } => Exit::Failed,
            EvalError::Dataset(_) | EvalError::UnknownAttribute(_) | EvalError::NothingToRun(_) => Exit::Input,
        };
        Failure::new(exit, e)
    }
}
