//! Command-line front end: `generate`, `validate`, `parent` and `convert`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 backend failure,
//! 3 validation found errors.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::backend::{build_backend, BackendConfig, BackendKind, CompletionBackend};
use crate::dataset::{
    count_single_rdf, load_entries, load_records, record_stats, save_canonical, select_examples,
    CanonicalRecord, DatasetFormat,
};
use crate::model::{Template, DEFAULT_EXAMPLE_CAP};
use crate::parent::{parent_score, tokenize, ParentConfig, ParentInputs, TableRecord};
use crate::pipeline::{run_dataset, PipelineConfig, DEFAULT_CV_THRESHOLD};
use crate::prompt::{InitialVariant, PromptSet};
use crate::report::{
    breakdown_template_map, breakdown_text, load_templates, rate_reduction, write_run_outputs,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "relverb", version, about = "Generate and check relation verbalisation templates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one template per relation of a dataset.
    Generate(GenerateArgs),
    /// Count parse errors in a templates file, or compare two files.
    Validate(ValidateArgs),
    /// Score line-delimited {hypothesis, reference, table} objects with PARENT.
    Parent(ParentArgs),
    /// Convert a source dataset to canonical jsonl.
    Convert(ConvertArgs),
}

/// Every option may also come from `--config <file.toml>` using the same
/// names in snake_case; flags given on the command line win.
#[derive(Debug, Default, Args)]
pub struct GenerateArgs {
    /// TOML file with default values for any of the options below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset format [default: canonical].
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    /// Keep only single-triple source entries.
    #[arg(long)]
    pub single_rdf: bool,
    /// Example triples per relation [default: 2].
    #[arg(long)]
    pub max_examples: Option<usize>,
    /// Initial prompt variant [default: asdot].
    #[arg(long, value_enum)]
    pub prompt: Option<InitialVariant>,
    /// Directory with prompt files; built-in prompts when absent.
    #[arg(long)]
    pub prompts_dir: Option<PathBuf>,
    /// Retry shots after the initial one [default: 0].
    #[arg(long)]
    pub max_retries: Option<usize>,
    /// Enable consistency validation [default].
    #[arg(long, overrides_with = "no_cv")]
    pub cv: bool,
    #[arg(long, overrides_with = "cv")]
    pub no_cv: bool,
    /// PARENT F1 threshold below which consistency repair runs [default: 0.7].
    #[arg(long)]
    pub cv_threshold: Option<f64>,
    /// Reference recall weight in PARENT [default: 0.5].
    #[arg(long)]
    pub parent_lambda: Option<f64>,
    /// Completion backend [default: mock].
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Chat-completion endpoint for the http backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model used at every stage unless overridden [default: gpt-3.5-turbo].
    #[arg(long)]
    pub model: Option<String>,
    /// Model for one generator shot, as `<n>=<name>`. Repeatable.
    #[arg(long = "model-shot", value_parser = parse_model_shot)]
    pub model_shot: Vec<(usize, String)>,
    /// Model for the consistency stage.
    #[arg(long)]
    pub model_cv: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Mock script (line-delimited json).
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Environment variable holding the API key [default: OPENAI_API_KEY].
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Request timeout in seconds [default: 60].
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Samples processed concurrently [default: 1].
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label used in report rows [default: derived from the setup].
    #[arg(long)]
    pub label: Option<String>,
    /// Template substituted for finals that still have parse errors. Off by default.
    #[arg(long)]
    pub backup_template: Option<String>,
    /// Accepted for compatibility; runs are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateFile {
    dataset: Option<PathBuf>,
    format: Option<DatasetFormat>,
    single_rdf: Option<bool>,
    max_examples: Option<usize>,
    prompt: Option<InitialVariant>,
    prompts_dir: Option<PathBuf>,
    max_retries: Option<usize>,
    cv: Option<bool>,
    cv_threshold: Option<f64>,
    parent_lambda: Option<f64>,
    backend: Option<BackendKind>,
    endpoint: Option<String>,
    model: Option<String>,
    #[serde(default)]
    model_shot: BTreeMap<String, String>,
    model_cv: Option<String>,
    cache_dir: Option<PathBuf>,
    script: Option<PathBuf>,
    api_key_env: Option<String>,
    max_tokens: Option<u32>,
    timeout_secs: Option<u64>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
    label: Option<String>,
    backup_template: Option<String>,
    seed: Option<u64>,
}

fn parse_model_shot(value: &str) -> Result<(usize, String), String> {
    let (shot, name) = value
        .split_once('=')
        .ok_or_else(|| format!("expected <n>=<name>, got `{value}`"))?;
    let shot = shot
        .trim()
        .parse()
        .map_err(|_| format!("invalid shot index `{shot}`"))?;
    if name.trim().is_empty() {
        return Err("empty model name".into());
    }
    Ok((shot, name.trim().to_owned()))
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Templates json (relation -> template).
    #[arg(long, required_unless_present_all = ["baseline", "improved"])]
    pub templates: Option<PathBuf>,
    /// Baseline templates for error-rate reduction.
    #[arg(long, requires = "improved")]
    pub baseline: Option<PathBuf>,
    #[arg(long, requires = "baseline")]
    pub improved: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = crate::parent::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = crate::parent::DEFAULT_MAX_N)]
    pub max_n: usize,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: DatasetFormat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub single_rdf: bool,
    /// Keep only the first K triples of each relation.
    #[arg(long)]
    pub max_examples: Option<usize>,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Parent(args) => cmd_parent(args),
        Command::Convert(args) => cmd_convert(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}

struct GenerateSettings {
    dataset: PathBuf,
    format: DatasetFormat,
    single_rdf: bool,
    max_examples: usize,
    prompt: InitialVariant,
    prompts_dir: Option<PathBuf>,
    max_retries: usize,
    cv: bool,
    cv_threshold: f64,
    parent_lambda: f64,
    backend: BackendConfig,
    shot_models: Vec<String>,
    cv_model: String,
    parallelism: usize,
    out: PathBuf,
    label: String,
    backup_template: Option<String>,
}

fn resolve_generate(args: GenerateArgs) -> Result<GenerateSettings, CliError> {
    let file: GenerateFile = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => GenerateFile::default(),
    };
    let _seed = args.seed.or(file.seed);

    let dataset = args
        .dataset
        .or(file.dataset)
        .ok_or_else(|| CliError::config("--dataset is required"))?;
    let max_retries = args.max_retries.or(file.max_retries).unwrap_or(0);
    let cv = if args.cv {
        true
    } else if args.no_cv {
        false
    } else {
        file.cv.unwrap_or(true)
    };
    let cv_threshold = args
        .cv_threshold
        .or(file.cv_threshold)
        .unwrap_or(DEFAULT_CV_THRESHOLD);
    let prompt = args.prompt.or(file.prompt).unwrap_or(InitialVariant::Asdot);
    let defaults = BackendConfig::default();
    let model = args.model.or(file.model).unwrap_or(defaults.model_name.clone());

    let mut shot_models = vec![model.clone(); max_retries + 1];
    let file_shots = file
        .model_shot
        .into_iter()
        .map(|(k, v)| {
            k.parse::<usize>()
                .map(|k| (k, v))
                .map_err(|_| CliError::config(format!("model_shot key `{k}` is not a shot index")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (shot, name) in file_shots.into_iter().chain(args.model_shot) {
        let slot = shot_models.get_mut(shot).ok_or_else(|| {
            CliError::config(format!("--model-shot {shot} exceeds --max-retries {max_retries}"))
        })?;
        *slot = name;
    }
    let cv_model = args.model_cv.or(file.model_cv).unwrap_or(model);

    let backend = BackendConfig {
        kind: args.backend.or(file.backend).unwrap_or(BackendKind::Mock),
        endpoint_url: args.endpoint.or(file.endpoint).unwrap_or_else(|| {
            if matches!(args.backend.or(file.backend), Some(BackendKind::Replay)) {
                String::new()
            } else {
                defaults.endpoint_url.clone()
            }
        }),
        max_tokens: args.max_tokens.or(file.max_tokens).unwrap_or(defaults.max_tokens),
        timeout: args
            .timeout_secs
            .or(file.timeout_secs)
            .map(Duration::from_secs)
            .unwrap_or(defaults.timeout),
        cache_dir: args.cache_dir.or(file.cache_dir),
        script_path: args.script.or(file.script),
        api_key_env: args.api_key_env.or(file.api_key_env).unwrap_or(defaults.api_key_env.clone()),
        ..defaults
    };
    if backend.kind == BackendKind::Mock && backend.script_path.is_none() {
        return Err(CliError::config("--backend mock requires --script"));
    }
    if backend.kind == BackendKind::Replay && backend.cache_dir.is_none() {
        return Err(CliError::config("--backend replay requires --cache-dir"));
    }

    let label = args.label.or(file.label).unwrap_or_else(|| {
        let mut label = format!("{:?} {}x", prompt, max_retries);
        if cv {
            label.push_str(" +CV");
        }
        label
    });

    Ok(GenerateSettings {
        dataset,
        format: args.format.or(file.format).unwrap_or(DatasetFormat::Canonical),
        single_rdf: args.single_rdf || file.single_rdf.unwrap_or(false),
        max_examples: args
            .max_examples
            .or(file.max_examples)
            .unwrap_or(DEFAULT_EXAMPLE_CAP),
        prompt,
        prompts_dir: args.prompts_dir.or(file.prompts_dir),
        max_retries,
        cv,
        cv_threshold,
        parent_lambda: args
            .parent_lambda
            .or(file.parent_lambda)
            .unwrap_or(crate::parent::DEFAULT_LAMBDA),
        backend,
        shot_models,
        cv_model,
        parallelism: args.parallelism.or(file.parallelism).unwrap_or(1),
        out: args.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        label,
        backup_template: args.backup_template.or(file.backup_template),
    })
}

/// Stages naming the same model share one backend instance, and with it the
/// concurrency limit and cache.
struct BackendPool<'a> {
    base: &'a BackendConfig,
    built: HashMap<String, Arc<dyn CompletionBackend>>,
}

impl BackendPool<'_> {
    fn get(&mut self, model: &str) -> Result<Arc<dyn CompletionBackend>, CliError> {
        if let Some(backend) = self.built.get(model) {
            return Ok(backend.clone());
        }
        let config = BackendConfig {
            model_name: model.to_owned(),
            ..self.base.clone()
        };
        let backend = build_backend(&config).map_err(CliError::config)?;
        self.built.insert(model.to_owned(), backend.clone());
        Ok(backend)
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<i32, CliError> {
    let settings = resolve_generate(args)?;
    if settings.max_examples == 0 {
        return Err(CliError::config("--max-examples must be at least 1"));
    }
    let prompts = match &settings.prompts_dir {
        Some(dir) => PromptSet::load(dir, settings.prompt).map_err(CliError::config)?,
        None => PromptSet::builtin(settings.prompt),
    };
    let records = load_records(&settings.dataset, settings.format, settings.single_rdf)
        .map_err(CliError::config)?;
    let samples = records
        .iter()
        .map(|r| select_examples(r, settings.max_examples))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::config)?;

    let mut pool = BackendPool {
        base: &settings.backend,
        built: HashMap::new(),
    };
    let generator_backends = settings
        .shot_models
        .iter()
        .map(|m| pool.get(m))
        .collect::<Result<Vec<_>, _>>()?;
    let cv_backend = if settings.cv {
        Some(pool.get(&settings.cv_model)?)
    } else {
        None
    };
    let backup_template = settings
        .backup_template
        .map(Template::new)
        .transpose()
        .map_err(CliError::config)?;
    let config = PipelineConfig {
        max_retries: settings.max_retries,
        cv_threshold: settings.cv_threshold,
        cv_enabled: settings.cv,
        prompts,
        generator_backends,
        cv_backend,
        parent: ParentConfig {
            lambda: settings.parent_lambda,
            ..ParentConfig::default()
        },
        backup_template,
    };

    let outcomes =
        run_dataset(&samples, &config, settings.parallelism).map_err(CliError::config)?;
    let summary = write_run_outputs(&settings.out, &settings.label, &outcomes).map_err(CliError::config)?;
    print!("{}", breakdown_text(&[summary.breakdown.clone()]));
    println!(
        "{} samples, {} failed, outputs in {}",
        summary.samples,
        summary.failed,
        settings.out.display()
    );
    Ok(if summary.failed > 0 { EXIT_BACKEND } else { EXIT_OK })
}

fn cmd_validate(args: ValidateArgs) -> Result<i32, CliError> {
    let mut code = EXIT_OK;
    if let Some(path) = &args.templates {
        let map = load_templates(path).map_err(CliError::config)?;
        let row = breakdown_template_map(&path.display().to_string(), &map);
        print!("{}", breakdown_text(std::slice::from_ref(&row)));
        if row.total_errors > 0 {
            code = EXIT_VALIDATION;
        }
    }
    if let (Some(baseline), Some(improved)) = (&args.baseline, &args.improved) {
        let base_row = breakdown_template_map(
            &baseline.display().to_string(),
            &load_templates(baseline).map_err(CliError::config)?,
        );
        let improved_row = breakdown_template_map(
            &improved.display().to_string(),
            &load_templates(improved).map_err(CliError::config)?,
        );
        print!("{}", breakdown_text(&[base_row.clone(), improved_row.clone()]));
        match rate_reduction(base_row.templates_with_errors, improved_row.templates_with_errors) {
            Ok(rr) => println!("RR%: {rr:.2}"),
            Err(_) => println!("RR%: undefined (baseline has no templates with errors)"),
        }
    }
    Ok(code)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TokensOrText {
    Tokens(Vec<String>),
    Text(String),
}

impl TokensOrText {
    fn into_tokens(self) -> Vec<String> {
        match self {
            TokensOrText::Tokens(tokens) => tokens,
            TokensOrText::Text(text) => tokenize(&text),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RecordLine {
    Pair(TokensOrText, TokensOrText),
    Object {
        attribute_tokens: Vec<String>,
        value_tokens: Vec<String>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParentLine {
    hypothesis: TokensOrText,
    reference: TokensOrText,
    table: Vec<RecordLine>,
}

/// Parses one `parent` input line. Text fields are tokenised; token arrays
/// are taken as given. Table rows are `[attribute, value]` pairs or
/// `{attribute_tokens, value_tokens}` objects.
pub fn parse_parent_line(line: &str) -> Result<ParentInputs, String> {
    let parsed: ParentLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let table = parsed
        .table
        .into_iter()
        .map(|record| match record {
            RecordLine::Pair(attribute, value) => {
                TableRecord::new(attribute.into_tokens(), value.into_tokens())
            }
            RecordLine::Object {
                attribute_tokens,
                value_tokens,
            } => TableRecord::new(attribute_tokens, value_tokens),
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(ParentInputs {
        hypothesis_tokens: parsed.hypothesis.into_tokens(),
        reference_tokens: parsed.reference.into_tokens(),
        table,
    })
}

fn cmd_parent(args: ParentArgs) -> Result<i32, CliError> {
    let config = ParentConfig {
        lambda: args.lambda,
        max_n: args.max_n,
    };
    config.validate().map_err(CliError::config)?;
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::config(format!("{}: {e}", args.input.display())))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::config)?;
        if line.trim().is_empty() {
            continue;
        }
        let inputs = parse_parent_line(&line)
            .map_err(|e| CliError::config(format!("{} line {}: {e}", args.input.display(), idx + 1)))?;
        let score = parent_score(&inputs, &config)
            .map_err(|e| CliError::config(format!("{} line {}: {e}", args.input.display(), idx + 1)))?;
        writeln!(out, "{}", serde_json::to_string(&score).expect("score serialises"))
            .map_err(CliError::config)?;
    }
    Ok(EXIT_OK)
}

fn truncate_examples(records: &mut [CanonicalRecord], cap: usize) {
    for record in records {
        record.triples.truncate(cap);
    }
}

fn cmd_convert(args: ConvertArgs) -> Result<i32, CliError> {
    if args.max_examples == Some(0) {
        return Err(CliError::config("--max-examples must be at least 1"));
    }
    if let Some(corpus) = load_entries(&args.input, args.format).map_err(CliError::config)? {
        eprintln!(
            "{}: {} entries ({} single-triple), {} skipped",
            args.input.display(),
            corpus.entries.len(),
            count_single_rdf(&corpus.entries),
            corpus.skipped
        );
    }
    let mut records =
        load_records(&args.input, args.format, args.single_rdf).map_err(CliError::config)?;
    let stats = record_stats(&records);
    if let Some(cap) = args.max_examples {
        truncate_examples(&mut records, cap);
    }
    write_canonical(&records, &args.out)?;
    eprintln!(
        "{} unique relations, {} triples -> {}",
        stats.unique_relations,
        stats.triples,
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn write_canonical(records: &[CanonicalRecord], path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::config)?;
    }
    save_canonical(records, path).map_err(CliError::config)
}
