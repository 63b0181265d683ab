//! Command-line front end: argument parsing, provider wiring and rendering.

/// `print!` that ignores a closed stdout.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub mod config;
pub mod exit;
mod render;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use debiaser_core::detector::detect;
use debiaser_core::eval::{load_dataset, run_eval, Dataset, EvalContext, EvalError, EvalOptions, MetricReport, Task};
use debiaser_core::lexicon::{check, load_lexicon_with, read_lexicon_file, validate_file, EmbedAtLoad, Lexicon};
use debiaser_core::providers::fixture::read_vector_file;
use debiaser_core::providers::{
    build_chat, build_classifier, build_embedder, CachedEmbedder, ClassifierKind, Embedder, EmbeddingCache,
};
use debiaser_core::rewriter::{DebiasRequest, Pipeline, TaskMode, Templates};

pub use config::{Overrides, RunConfig};
pub use exit::{Exit, Failure};

#[derive(Debug, Parser)]
#[command(name = "debiaser", version, about = "Detect and repair social bias in language model output")]
pub struct Cli {
    /// Run configuration (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on concurrent evaluation workers.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Validate configuration, templates and inputs without calling any provider.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Directory of `<mode>.txt` instruction template overrides.
    #[arg(long, global = true, value_name = "DIR")]
    pub template_dir: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Directory for evaluation reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub attribute: Option<String>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<TaskMode>,
    /// Run detection again on rewritten text and record the result.
    #[arg(long, global = true)]
    pub recheck: bool,
    /// Sets both detection thresholds.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon_orientation: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon_unpleasant: Option<f64>,
    /// Degeneracy margin for the repair vector.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub max_error_rate: Option<f64>,
    /// Keep multiple-choice options in dataset order.
    #[arg(long, global = true)]
    pub no_shuffle: bool,
    #[arg(long, global = true, value_name = "FILE")]
    pub embedding_cache: Option<PathBuf>,
    /// Overrides any configuration field, e.g. `--set llm.model_id=gpt-4o`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report group orientation and unpleasant characteristic for a text.
    Detect {
        text: String,
        #[arg(long)]
        json: bool,
    },
    /// Ask the model, detect bias in its answer and request one rewrite.
    Debias {
        prompt: String,
        /// Answer option for choice modes; give exactly three.
        #[arg(long = "option", value_name = "TEXT")]
        options: Vec<String>,
        /// Use this as the model's first answer instead of asking for one.
        #[arg(long)]
        response: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run a benchmark and write the report.
    Eval {
        #[arg(value_enum)]
        task: TaskArg,
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        /// BOLD domain when the dataset file name does not carry it.
        #[arg(long)]
        domain: Option<String>,
    },
    /// Lexicon file checks.
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    /// Inspect or empty the embedding cache.
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Debug, Subcommand)]
pub enum LexiconCommand {
    /// Check a lexicon file and list every violation.
    Validate { path: Option<PathBuf> },
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Record count, model and size of the cache file.
    Stats {
        #[arg(long)]
        json: bool,
    },
    /// Remove every cached vector.
    Clear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Stereoset,
    Winobias,
    Bold,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Stereoset => Task::StereoSet,
            TaskArg::Winobias => Task::WinoBias,
            TaskArg::Bold => Task::Bold,
        }
    }
}

fn parse_mode(s: &str) -> Result<TaskMode, String> {
    s.parse::<TaskMode>().map_err(|e| e.to_string())
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
            template_dir: self.template_dir.clone(),
            lexicon: self.lexicon.clone(),
            output: self.output.clone(),
            attribute: self.attribute.clone(),
            mode: self.mode,
            recheck: self.recheck,
            epsilon: self.epsilon,
            epsilon_orientation: self.epsilon_orientation,
            epsilon_unpleasant: self.epsilon_unpleasant,
            delta: self.delta,
            max_error_rate: self.max_error_rate,
            no_shuffle: self.no_shuffle,
            embedding_cache: self.embedding_cache.clone(),
            set: self.set.clone(),
        }
    }
}

/// Runs a parsed command, writing human output to stdout. Returns the exit
/// status for successful and partially successful runs.
pub fn run(cli: Cli) -> Result<Exit, Failure> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    match cli.command {
        Command::Lexicon(LexiconCommand::Validate { path }) => lexicon_validate(&cfg, path.as_deref()),
        Command::Cache(c) => cache(&cfg, c),
        Command::Detect { text, json } => {
            cfg.validate()?;
            if cli.dry_run {
                return dry_run(&cfg, None);
            }
            cmd_detect(&cfg, &text, json)
        }
        Command::Debias { prompt, options, response, json } => {
            cfg.validate()?;
            if cli.dry_run {
                return dry_run(&cfg, None);
            }
            cmd_debias(&cfg, &prompt, &options, response, json)
        }
        Command::Eval { task, dataset, domain } => {
            cfg.validate()?;
            let task = Task::from(task);
            let data = load_eval_dataset(&cfg, task, dataset, domain.as_deref())?;
            if cli.dry_run {
                return dry_run(&cfg, Some(&data));
            }
            cmd_eval(&cfg, &data)
        }
    }
}

fn templates(cfg: &RunConfig) -> Result<Templates, Failure> {
    Ok(match &cfg.template_dir {
        Some(d) => Templates::load_dir(d)?,
        None => Templates::default(),
    })
}

fn missing_credentials(cfg: &RunConfig) -> Result<(), Failure> {
    let missing: Vec<String> = cfg.credential_vars().into_iter().filter(|v| std::env::var_os(v).is_none()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(Exit::Config, format!("credential variable(s) not set: {}", missing.join(", "))))
    }
}

fn dry_run(cfg: &RunConfig, data: Option<&Dataset>) -> Result<Exit, Failure> {
    let templates = templates(cfg)?;
    let path = cfg.lexicon_path()?;
    let file = read_lexicon_file(path)?;
    let violations = check(&file, true);
    if !violations.is_empty() {
        return Err(Failure::new(Exit::Config, render::violations(path, &violations)));
    }
    missing_credentials(cfg)?;
    if data.is_some_and(|d| d.task() == Task::Bold) {
        let classifier = cfg.classifier.as_ref().map(build_classifier).transpose()?;
        for kind in ClassifierKind::ALL {
            if !classifier.as_ref().is_some_and(|c| c.supports(kind)) {
                return Err(EvalError::MissingClassifier(kind).into());
            }
        }
    }
    let mut out = String::from("configuration OK\n");
    out.push_str(&format!(
        "lexicon: {} ({} attributes, {} entries, model {}, dim {})\n",
        path.display(),
        file.attributes.len(),
        file.entries.len(),
        file.embedding_model_id,
        file.dim
    ));
    for mode in TaskMode::ALL {
        out.push_str(&format!("template {}: {}\n", mode, templates.get(mode).id()));
    }
    if let Some(d) = data {
        out.push_str(&format!("dataset: {} {} instances\n", d.task().as_str(), d.len()));
    }
    out!("{out}");
    Ok(Exit::Ok)
}

struct Runtime {
    lexicon: Arc<Lexicon>,
    embedder: Arc<dyn Embedder>,
}

fn runtime(cfg: &RunConfig) -> Result<Runtime, Failure> {
    missing_credentials(cfg)?;
    let lexicon_path = cfg.lexicon_path()?;
    let mut embedder = build_embedder(cfg.embedding_spec()?, cfg.seed)?;
    if let Some(path) = &cfg.embedding_cache {
        let dim = match embedder.dim() {
            Some(d) => d,
            None => read_lexicon_file(lexicon_path)?.dim,
        };
        let cache = Arc::new(EmbeddingCache::open(path, embedder.model_id(), dim)?);
        embedder = Arc::new(CachedEmbedder::new(embedder, cache)?);
    }
    let lexicon = load_lexicon_with(
        lexicon_path,
        Some(EmbedAtLoad { embedder: embedder.as_ref(), instructions: &cfg.instructions }),
    )?;
    Ok(Runtime { lexicon: Arc::new(lexicon), embedder })
}

fn attribute<'a>(cfg: &'a RunConfig, lexicon: &Lexicon) -> Result<&'a str, Failure> {
    let name = cfg
        .attribute
        .as_deref()
        .ok_or_else(|| Failure::new(Exit::Input, "no attribute given (pass --attribute)"))?;
    lexicon.attribute(name)?;
    Ok(name)
}

fn cmd_detect(cfg: &RunConfig, text: &str, json: bool) -> Result<Exit, Failure> {
    let rt = runtime(cfg)?;
    let attr = attribute(cfg, &rt.lexicon)?;
    let report = detect(text, attr, &rt.lexicon, &cfg.detection, rt.embedder.as_ref(), &cfg.instructions)?;
    if json {
        outln!("{}", render::json(&render::ReportView::from(&report)));
    } else {
        out!("{}", render::report(&report));
    }
    Ok(Exit::Ok)
}

fn pipeline(cfg: &RunConfig, rt: &Runtime) -> Result<Pipeline, Failure> {
    Ok(Pipeline {
        lexicon: rt.lexicon.clone(),
        detection: cfg.detection,
        embedder: rt.embedder.clone(),
        llm: build_chat(cfg.llm_spec()?)?,
        templates: templates(cfg)?,
        instructions: cfg.instructions.clone(),
        recheck: cfg.recheck,
    })
}

fn cmd_debias(
    cfg: &RunConfig,
    prompt: &str,
    options: &[String],
    response: Option<String>,
    json: bool,
) -> Result<Exit, Failure> {
    let rt = runtime(cfg)?;
    let attr = attribute(cfg, &rt.lexicon)?;
    let pipeline = pipeline(cfg, &rt)?;
    let req = DebiasRequest {
        prompt,
        attribute: attr,
        mode: cfg.mode,
        options: (!options.is_empty()).then_some(options),
    };
    let outcome = match response {
        Some(r) => pipeline.debias_response(&req, r)?,
        None => pipeline.debias(&req)?,
    };
    if json {
        outln!("{}", render::json(&render::OutcomeView::from(&outcome)));
    } else {
        out!("{}", render::outcome(&outcome));
    }
    Ok(Exit::Ok)
}

fn load_eval_dataset(
    cfg: &RunConfig,
    task: Task,
    path: Option<PathBuf>,
    domain: Option<&str>,
) -> Result<Dataset, Failure> {
    let configured = match task {
        Task::StereoSet => &cfg.datasets.stereoset,
        Task::WinoBias => &cfg.datasets.winobias,
        Task::Bold => &cfg.datasets.bold,
    };
    let path = path.or_else(|| configured.clone()).ok_or_else(|| {
        Failure::new(Exit::Input, format!("no {} dataset given (pass --dataset or set datasets.{})", task.as_str(), task.as_str()))
    })?;
    load_dataset(task, &path, domain).map_err(|e| Failure::new(Exit::Input, e))
}

fn cmd_eval(cfg: &RunConfig, data: &Dataset) -> Result<Exit, Failure> {
    let rt = runtime(cfg)?;
    if let Some(a) = &cfg.attribute {
        rt.lexicon.attribute(a)?;
    }
    let classifier = cfg.classifier.as_ref().map(build_classifier).transpose()?;
    let ctx = EvalContext { pipeline: pipeline(cfg, &rt)?, classifier };
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        log::warn!("could not install the interrupt handler: {e}");
    }
    let opts = EvalOptions {
        attribute: cfg.attribute.clone(),
        workers: cfg.workers,
        max_error_rate: cfg.max_error_rate,
        seed: cfg.seed,
        shuffle_options: cfg.shuffle_options,
        cancel: Some(cancel),
        ..EvalOptions::default()
    };
    match run_eval(data, &ctx, &opts) {
        Ok(report) => {
            write_report(cfg, &report)?;
            Ok(if report.truncated { Exit::Interrupted } else { Exit::Ok })
        }
        Err(EvalError::TooManyErrors { errors, attempted, limit, first, report }) => {
            write_report(cfg, &report)?;
            Err(Failure::new(
                Exit::Failed,
                format!("{errors} of {attempted} instances failed (limit {limit:.0}%); first error: {first}"),
            ))
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes `<task>[-<attribute>].json` and `.txt` under the output directory.
pub fn report_paths(output: &Path, report: &MetricReport, attribute: Option<&str>) -> (PathBuf, PathBuf) {
    let stem = match attribute {
        Some(a) => format!("{}-{a}", report.task),
        None => report.task.clone(),
    };
    (output.join(format!("{stem}.json")), output.join(format!("{stem}.txt")))
}

fn write_report(cfg: &RunConfig, report: &MetricReport) -> Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::new(Exit::Input, format!("{}: {e}", p.display()));
    let output = cfg.output_dir();
    std::fs::create_dir_all(&output).map_err(|e| io(&output, e))?;
    let (json, table) = report_paths(&output, report, cfg.attribute.as_deref());
    let rendered = report.render_table();
    std::fs::write(&json, report.to_json()).map_err(|e| io(&json, e))?;
    std::fs::write(&table, &rendered).map_err(|e| io(&table, e))?;
    out!("{rendered}");
    outln!("\nreport: {}\ntable: {}", json.display(), table.display());
    Ok(())
}

fn lexicon_validate(cfg: &RunConfig, path: Option<&Path>) -> Result<Exit, Failure> {
    let path = match path {
        Some(p) => p,
        None => cfg.lexicon_path()?,
    };
    let violations = validate_file(path);
    if violations.is_empty() {
        let file = read_lexicon_file(path)?;
        outln!(
            "{}: OK ({} attributes, {} groups, {} entries)",
            path.display(),
            file.attributes.len(),
            file.attributes.iter().map(|a| a.groups.len()).sum::<usize>(),
            file.entries.len()
        );
        Ok(Exit::Ok)
    } else {
        out!("{}", render::violations(path, &violations));
        Ok(Exit::Failed)
    }
}

fn cache(cfg: &RunConfig, cmd: CacheCommand) -> Result<Exit, Failure> {
    let path = cfg
        .embedding_cache
        .as_deref()
        .ok_or_else(|| Failure::new(Exit::Config, "no embedding cache configured (set `embedding_cache`)"))?;
    if !path.exists() {
        match cmd {
            CacheCommand::Stats { json: true } => outln!(
                "{}",
                render::json(&serde_json::json!({ "path": path, "records": 0, "file_bytes": 0 }))
            ),
            CacheCommand::Stats { json: false } => outln!("{}: empty (no cache file)", path.display()),
            CacheCommand::Clear => outln!("{}: nothing to clear", path.display()),
        }
        return Ok(Exit::Ok);
    }
    let manifest = read_vector_file(path, false)?.manifest;
    let cache = EmbeddingCache::open(path, &manifest.model_id, manifest.dim)?;
    match cmd {
        CacheCommand::Stats { json } => {
            let stats = cache.stats();
            if json {
                outln!("{}", render::json(&stats));
            } else {
                outln!("path: {}", stats.path.display());
                outln!("model: {}", stats.model_id);
                outln!("dim: {}", stats.dim);
                outln!("records: {}", stats.records);
                outln!("rejected on load: {}", stats.rejected_on_load);
                outln!("bytes: {}", stats.file_bytes);
            }
        }
        CacheCommand::Clear => {
            let n = cache.len();
            cache.clear()?;
            outln!("{}: cleared {n} record(s)", path.display());
        }
    }
    Ok(Exit::Ok)
}
