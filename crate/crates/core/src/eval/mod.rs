//! Benchmark loaders, metrics and the batch evaluation runner.

pub mod answers;
pub mod datasets;
pub mod metrics;
pub mod report;
pub mod run;

pub use answers::{parse_choice, AnswerError};
pub use datasets::{
    load_bold, load_stereoset, load_winobias, BoldPrompt, DatasetError, StereoOption, StereoSetInstance,
    WinoBiasInstance, BLANK,
};
pub use metrics::{
    label_proportions, pronoun_proportions, score_reduction, stereotype_score, toxicity_reduction, MetricError,
    PolarityLabel, PronounCategory, PronounProportions, StereoLabel,
};
pub use report::{columns, AuditRow, MetricReport, RowStatus};
pub use run::{load_dataset, run_eval, Dataset, EvalContext, EvalError, EvalOptions, Task, PRONOUN_OPTIONS};
