//! The `qad` command line.
//!
//! A `--config` file holds `key = value` lines named after the long flags;
//! flags given on the command line win. Every command that writes `--out`
//! also writes the fully resolved settings to `<out>.config`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{
    read_lines, read_nbest_with, read_weights, write_lines, write_nbest, write_weights, NBestEntry,
};
use crate::error::{Classify, ErrorClass};
use crate::generation::{build_nbest, GenConfig, Method};
use crate::mbr::{mbr_corpus, two_stage_corpus, MbrConfig};
use crate::mert::{mert_optimize, MertConfig, MertInstance, Objective};
use crate::metrics::external::unescape_field;
use crate::metrics::{metric_fn, sentence_bleu, sentence_chrf, MetricKind, MetricSpec};
use crate::pipeline::{
    attach_references, feature_scorers, feature_sources, load_model_dir, parse_key_values,
    render_key_values, run_pipeline, write_selections, write_trace, ObjectiveSpec, RankMethod,
    RunConfig,
};
use crate::report::{eval_report, mqm_score, MqmCounts, DEFAULT_MQM_NORM};
use crate::rerank::{
    extract_features, read_feature_cache, rerank_fixed, rerank_tuned, weight_columns,
    write_feature_cache, FeatureMatrix, Selection, LOGPROB,
};

#[derive(Debug, Parser)]
#[command(
    name = "qad",
    version,
    about = "Quality-aware decoding for machine translation"
)]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0: one per core). Never changes any output.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// `key = value` settings file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Merge identical candidates into multiplicity counts.
    #[arg(long, global = true)]
    pub dedup: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode every segment model into an N-best list.
    Generate(GenerateArgs),
    /// Extract feature columns (logprob, reference-free metrics) into a cache.
    Score(ScoreArgs),
    /// Pick the candidate maximizing a single feature.
    RerankFixed(RerankFixedArgs),
    /// Pick the candidate maximizing a weighted feature sum.
    RerankTuned(RerankTunedArgs),
    /// Tune reranking weights on a dev N-best list.
    Mert(MertArgs),
    /// Minimum Bayes risk selection, optionally after tuned pruning.
    Mbr(MbrArgs),
    /// Generate, extract features, tune, rank and evaluate in one run.
    Pipeline(Box<PipelineArgs>),
    /// Corpus-level scores of a hypothesis file.
    Eval(EvalArgs),
    /// Aggregate MQM error counts into a score.
    MqmScore(MqmArgs),
    /// Serve a builtin metric over the external scorer protocol.
    ServeScorer(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Directory of `<id>.json` segment models.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "beam")]
    pub method: Method,
    #[arg(long, default_value_t = 5)]
    pub beam_size: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Nucleus mass.
    #[arg(long, default_value_t = 0.6)]
    pub p: f64,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// References to embed, one line per segment.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    /// `logprob` or a reference-free metric (`external:<cmd>`); repeatable.
    #[arg(long = "feature", default_value = LOGPROB)]
    pub features: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RankOutput {
    /// Selected hypotheses, one per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Selections as JSON lines.
    #[arg(long)]
    pub selections: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RerankFixedArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    /// Feature cache; without it features come from the N-best list.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value = LOGPROB)]
    pub feature: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: RankOutput,
}

#[derive(Debug, Args, Serialize)]
pub struct RerankTunedArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: RankOutput,
}

#[derive(Debug, Args, Serialize)]
pub struct MertArgs {
    /// Dev N-best list with references.
    #[arg(long)]
    pub nbest: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// References, if the N-best list has none.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// `corpus_bleu` or `mean:<metric>`.
    #[arg(long, default_value = "corpus_bleu")]
    pub objective: String,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 30)]
    pub max_iterations: usize,
    /// Weights file.
    #[arg(long)]
    pub out: PathBuf,
    /// Accepted steps as JSON lines (default `<out>.trace.jsonl`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MbrArgs {
    #[arg(long)]
    pub nbest: PathBuf,
    /// `bleu`, `chrf` or `external:<cmd>`.
    #[arg(long, default_value = "bleu")]
    pub utility: String,
    /// Number of pseudo-references, or `all`.
    #[arg(long, default_value = "all")]
    pub refs: String,
    #[arg(long)]
    pub no_diagonal: bool,
    /// Two-stage: keep the tuned reranker's top M first (needs --weights).
    #[arg(long)]
    pub prune_to: Option<usize>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Two-stage: draw pseudo-references from the full list.
    #[arg(long)]
    pub refs_from_full: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: RankOutput,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub nbest: Option<PathBuf>,
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long, default_value = "beam")]
    pub method: Method,
    #[arg(long, default_value_t = 5)]
    pub beam_size: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.6)]
    pub p: f64,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    #[arg(long = "feature", default_value = LOGPROB)]
    pub features: Vec<String>,
    /// `fixed`, `tuned`, `mbr` or `two-stage`.
    #[arg(long, default_value = "fixed")]
    pub rank: RankMethod,
    #[arg(long, default_value = LOGPROB)]
    pub rank_feature: String,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub dev_models: Option<PathBuf>,
    #[arg(long)]
    pub dev_nbest: Option<PathBuf>,
    #[arg(long)]
    pub dev_refs: Option<PathBuf>,
    #[arg(long, default_value = "corpus_bleu")]
    pub objective: String,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 30)]
    pub max_iterations: usize,
    #[arg(long, default_value = "bleu")]
    pub utility: String,
    /// MBR pseudo-references: a count or `all`.
    #[arg(long, default_value = "all")]
    pub pseudo_refs: String,
    #[arg(long)]
    pub no_diagonal: bool,
    #[arg(long)]
    pub prune_to: Option<usize>,
    #[arg(long)]
    pub refs_from_full: bool,
    #[arg(long = "metric", default_values = ["bleu", "chrf"])]
    pub metrics: Vec<String>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub hyps: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    /// Sources (needed by reference-free metrics).
    #[arg(long)]
    pub src: Option<PathBuf>,
    #[arg(long = "metric", default_values = ["bleu", "chrf"])]
    pub metrics: Vec<String>,
    /// TSV report; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MqmArgs {
    #[arg(long, default_value_t = 0)]
    pub minor: u64,
    #[arg(long, default_value_t = 0)]
    pub major: u64,
    #[arg(long, default_value_t = 0)]
    pub critical: u64,
    #[arg(long)]
    pub segments: u64,
    #[arg(long, default_value_t = DEFAULT_MQM_NORM)]
    pub mqm_norm: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// `bleu`, `chrf`, `length` (reference-free token count) or
    /// `constant:<value>` (reference-free).
    #[arg(long, default_value = "bleu")]
    pub kind: String,
}

/// A failed command: message plus exit code class.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl<E: Classify + std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        class: ErrorClass::Validation,
        message: message.into(),
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError {
        class: ErrorClass::Io,
        message: format!("{}: {e}", path.display()),
    }
}

/// Insert settings from the config file as flags right after the
/// subcommand name, skipping any the user passed explicitly.
fn merge_config(argv: &[OsString], sub: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let pairs = parse_key_values(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let cmd = Cli::command();
    let subcmd = cmd.find_subcommand(sub).expect("parsed subcommand exists");
    let user_flags: Vec<String> = argv
        .iter()
        .filter_map(|a| a.to_str())
        .filter(|a| a.starts_with("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in pairs {
        let flag = format!("--{key}");
        if key == "config" || value.is_empty() || user_flags.contains(&flag) {
            continue;
        }
        let arg = subcmd
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                invalid(format!(
                    "{}: unknown setting {key:?} for {sub}",
                    path.display()
                ))
            })?;
        if arg.get_action().takes_values() {
            injected.push(flag.into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" => injected.push(flag.into()),
                "false" => {}
                _ => {
                    return Err(invalid(format!(
                        "{}: {key} must be true or false",
                        path.display()
                    )))
                }
            }
        }
    }
    let pos = argv
        .iter()
        .position(|a| a.to_str() == Some(sub))
        .expect("subcommand appears in argv");
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

fn parse(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&argv)?;
    Cli::from_arg_matches(&matches)
}

/// Flatten serialized settings to `key = value` lines; lists repeat the key.
fn settings_lines(cli: &Cli, args: &impl Serialize) -> String {
    let mut pairs = vec![
        ("seed".to_string(), cli.seed.to_string()),
        ("dedup".to_string(), cli.dedup.to_string()),
    ];
    if let serde_json::Value::Object(map) = serde_json::to_value(args).expect("settings serialize")
    {
        for (k, v) in map {
            let key = k.replace('_', "-");
            let render = |v: &serde_json::Value| match v {
                serde_json::Value::Null => String::new(),
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            match &v {
                serde_json::Value::Array(items) => {
                    pairs.extend(items.iter().map(|i| (key.clone(), render(i))))
                }
                other => pairs.push((key, render(other))),
            }
        }
    }
    render_key_values(&pairs)
}

fn write_settings(cli: &Cli, args: &impl Serialize, out: &Path) -> Result<(), CliError> {
    let mut name = out.as_os_str().to_owned();
    name.push(".config");
    let path = PathBuf::from(name);
    fs::write(&path, settings_lines(cli, args)).map_err(|e| io_error(&path, e))
}

fn load_features(
    entries: &[NBestEntry],
    cache: &Option<PathBuf>,
) -> Result<FeatureMatrix, CliError> {
    let features = match cache {
        Some(path) => read_feature_cache(path)?,
        None => FeatureMatrix::from_entries(entries)?,
    };
    features.check_against(entries)?;
    Ok(features)
}

fn write_ranking(selections: &[Selection], output: &RankOutput) -> Result<(), CliError> {
    let hyps: Vec<String> = selections.iter().map(|s| s.text.clone()).collect();
    write_lines(&hyps, &output.out)?;
    if let Some(path) = &output.selections {
        write_selections(selections, path)?;
    }
    Ok(())
}

fn parse_refs_count(text: &str) -> Result<Option<usize>, CliError> {
    match text {
        "all" => Ok(None),
        n => match n.parse::<usize>() {
            Ok(m) if m > 0 => Ok(Some(m)),
            _ => Err(invalid(format!(
                "pseudo-reference count must be a positive integer or `all`, got {n:?}"
            ))),
        },
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<(), CliError> {
    let segments = load_model_dir(&a.model)?;
    if a.beam_size == 0 || a.samples == 0 || a.max_len == 0 {
        return Err(invalid("beam-size, samples and max-len must be positive"));
    }
    if !(a.p > 0.0 && a.p <= 1.0) {
        return Err(invalid(format!("p must lie in (0, 1], got {}", a.p)));
    }
    let cfg = GenConfig {
        method: a.method,
        beam_size: a.beam_size,
        num_samples: a.samples,
        nucleus_p: a.p,
        max_len: a.max_len,
        length_penalty: 0.0,
        seed: cli.seed,
        dedup: cli.dedup,
    };
    let mut entries = build_nbest(&segments, &cfg);
    if let Some(refs) = &a.refs {
        attach_references(&mut entries, refs)?;
    }
    write_nbest(&entries, &a.out)?;
    write_settings(cli, a, &a.out)
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<(), CliError> {
    let entries = read_nbest_with(&a.nbest, cli.dedup)?;
    let scorers = feature_scorers(&a.features)?;
    let features = extract_features(&entries, &feature_sources(&scorers))?;
    write_feature_cache(&features, &a.out)?;
    write_settings(cli, a, &a.out)
}

fn rerank_fixed_cmd(cli: &Cli, a: &RerankFixedArgs) -> Result<(), CliError> {
    let entries = read_nbest_with(&a.nbest, cli.dedup)?;
    let features = load_features(&entries, &a.features)?;
    write_ranking(&rerank_fixed(&entries, &features, &a.feature)?, &a.output)?;
    write_settings(cli, a, &a.output.out)
}

fn rerank_tuned_cmd(cli: &Cli, a: &RerankTunedArgs) -> Result<(), CliError> {
    let entries = read_nbest_with(&a.nbest, cli.dedup)?;
    let features = load_features(&entries, &a.features)?;
    let weights = read_weights(&a.weights)?;
    write_ranking(&rerank_tuned(&entries, &features, &weights)?, &a.output)?;
    write_settings(cli, a, &a.output.out)
}

fn mert_cmd(cli: &Cli, a: &MertArgs) -> Result<(), CliError> {
    let mut entries = read_nbest_with(&a.nbest, cli.dedup)?;
    if let Some(refs) = &a.refs {
        attach_references(&mut entries, refs)?;
    }
    let features = load_features(&entries, &a.features)?;
    if a.restarts == 0 || a.max_iterations == 0 {
        return Err(invalid("restarts and max-iterations must be positive"));
    }
    let (objective, metric) = match a.objective.parse::<ObjectiveSpec>().map_err(invalid)? {
        ObjectiveSpec::CorpusBleu => (Objective::CorpusBleu, None),
        ObjectiveSpec::Mean(spec) => (Objective::MeanSentenceScore, Some(metric_fn(&spec)?)),
    };
    let inst = MertInstance::from_nbest(&entries, &features, objective, metric.as_deref())?;
    let cfg = MertConfig {
        objective,
        restarts: a.restarts,
        max_iterations: a.max_iterations,
        seed: cli.seed,
        ..Default::default()
    };
    let result = mert_optimize(&inst, &cfg)?;
    if result.degenerate {
        eprintln!("warning: every segment's candidates have identical features; weights left at their initial values");
    }
    write_weights(&result.weights, &a.out)?;
    let trace = a.trace.clone().unwrap_or_else(|| {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".trace.jsonl");
        PathBuf::from(name)
    });
    write_trace(&result.trace, &trace)?;
    eprintln!("objective {}", result.objective);
    write_settings(cli, a, &a.out)
}

fn mbr_cmd(cli: &Cli, a: &MbrArgs) -> Result<(), CliError> {
    let entries = read_nbest_with(&a.nbest, cli.dedup)?;
    let utility = metric_fn(&MetricSpec::parse(&a.utility, MetricKind::ReferenceBased)?)?;
    let cfg = MbrConfig {
        include_diagonal: !a.no_diagonal,
        num_pseudo_refs: parse_refs_count(&a.refs)?,
        prune_to: a.prune_to,
        refs_from_full: a.refs_from_full,
    };
    let selections = match (&a.prune_to, &a.weights) {
        (None, _) => mbr_corpus(&entries, utility.as_ref(), &cfg)?,
        (Some(_), Some(weights)) => {
            let features = load_features(&entries, &a.features)?;
            let weights = read_weights(weights)?;
            if !weights.has_nonzero() {
                return Err(invalid("weights have no nonzero entry"));
            }
            let cols = weight_columns(&features, &weights)?;
            two_stage_corpus(&entries, &features, &cols, utility.as_ref(), &cfg)?
        }
        (Some(_), None) => return Err(invalid("--prune-to needs --weights")),
    };
    write_ranking(&selections, &a.output)?;
    write_settings(cli, a, &a.output.out)
}

fn pipeline_cmd(cli: &Cli, a: &PipelineArgs) -> Result<(), CliError> {
    let cfg = RunConfig {
        seed: cli.seed,
        dedup: cli.dedup,
        models: a.models.clone(),
        nbest: a.nbest.clone(),
        refs: a.refs.clone(),
        method: a.method,
        beam_size: a.beam_size,
        samples: a.samples,
        p: a.p,
        max_len: a.max_len,
        features: a.features.clone(),
        rank: a.rank,
        rank_feature: a.rank_feature.clone(),
        weights: a.weights.clone(),
        dev_models: a.dev_models.clone(),
        dev_nbest: a.dev_nbest.clone(),
        dev_refs: a.dev_refs.clone(),
        objective: a.objective.clone(),
        restarts: a.restarts,
        max_iterations: a.max_iterations,
        utility: a.utility.clone(),
        pseudo_refs: parse_refs_count(&a.pseudo_refs)?,
        no_diagonal: a.no_diagonal,
        prune_to: a.prune_to,
        refs_from_full: a.refs_from_full,
        metrics: a.metrics.clone(),
        out: a.out.clone(),
    };
    let outputs = run_pipeline(&cfg)?;
    if let Some(eval) = outputs.files.iter().find(|p| p.ends_with("eval.txt")) {
        let text = fs::read_to_string(eval).map_err(|e| io_error(eval, e))?;
        print!("{text}");
    }
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<(), CliError> {
    let hyps = read_lines(&a.hyps)?;
    let refs = read_lines(&a.refs)?;
    let srcs = match &a.src {
        Some(p) => read_lines(p)?,
        None => vec![String::new(); hyps.len()],
    };
    let specs = a
        .metrics
        .iter()
        .map(|m| {
            MetricSpec::parse(m, MetricKind::ReferenceBased)
                .or_else(|_| MetricSpec::parse(m, MetricKind::ReferenceFree))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = eval_report(&hyps, &refs, &srcs, &specs)?;
    print!("{}", report.to_text());
    if let Some(out) = &a.out {
        fs::write(out, report.to_tsv()).map_err(|e| io_error(out, e))?;
        write_settings(cli, a, out)?;
    }
    Ok(())
}

fn mqm_cmd(a: &MqmArgs) -> Result<(), CliError> {
    let counts = MqmCounts {
        minor: a.minor,
        major: a.major,
        critical: a.critical,
        num_segments: a.segments,
    };
    println!("{}", mqm_score(&counts, a.mqm_norm)?);
    Ok(())
}

/// Reference scorer speaking the external protocol on stdin/stdout.
fn serve_scorer(a: &ServeArgs) -> Result<(), CliError> {
    enum Kind {
        Bleu,
        Chrf,
        Length,
        Constant(f64),
    }
    let kind = match a.kind.as_str() {
        "bleu" => Kind::Bleu,
        "chrf" => Kind::Chrf,
        "length" => Kind::Length,
        other => match other.strip_prefix("constant:").map(str::parse::<f64>) {
            Some(Ok(v)) => Kind::Constant(v),
            _ => return Err(invalid(format!("unknown scorer kind {other:?}"))),
        },
    };
    let (name, tag) = match &kind {
        Kind::Bleu => ("bleu", "ref"),
        Kind::Chrf => ("chrf", "ref"),
        Kind::Length => ("length", "noref"),
        Kind::Constant(_) => ("constant", "noref"),
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let broken = |e: io::Error| CliError {
        class: ErrorClass::Io,
        message: format!("scorer stream: {e}"),
    };
    writeln!(stdout, "QAD-SCORER 1 {name} {tag}").map_err(broken)?;
    stdout.flush().map_err(broken)?;
    for line in stdin.lock().lines() {
        let line = line.map_err(broken)?;
        let fields: Vec<String> = line.split('\t').map(unescape_field).collect();
        let field = |i: usize| fields.get(i).map(String::as_str).unwrap_or_default();
        let value = match &kind {
            Kind::Bleu => sentence_bleu(field(1), field(2)),
            Kind::Chrf => sentence_chrf(field(1), field(2)),
            Kind::Length => field(1).split_whitespace().count() as f64,
            Kind::Constant(v) => *v,
        };
        writeln!(stdout, "{value}").map_err(broken)?;
        stdout.flush().map_err(broken)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Score(a) => score(cli, a),
        Command::RerankFixed(a) => rerank_fixed_cmd(cli, a),
        Command::RerankTuned(a) => rerank_tuned_cmd(cli, a),
        Command::Mert(a) => mert_cmd(cli, a),
        Command::Mbr(a) => mbr_cmd(cli, a),
        Command::Pipeline(a) => pipeline_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::MqmScore(a) => mqm_cmd(a),
        Command::ServeScorer(a) => serve_scorer(a),
    }
}

/// `--config` value and subcommand name, found without validating argv.
fn config_and_subcommand(argv: &[OsString]) -> (Option<PathBuf>, Option<String>) {
    let cmd = Cli::command();
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_str().unwrap_or_default();
        if arg == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else if sub.is_none() && (arg == "--seed" || arg == "--jobs") {
            i += 1;
        } else if sub.is_none() && cmd.find_subcommand(arg).is_some() {
            sub = Some(arg.to_string());
        }
        i += 1;
    }
    (config, sub)
}

/// Run the command line; returns the process exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let report = |e: clap::Error| {
        let code = if e.use_stderr() {
            ErrorClass::Validation.exit_code()
        } else {
            0
        };
        let _ = e.print();
        code
    };
    // Required flags may come from the config file, so locate it before
    // clap validates anything.
    let argv = match config_and_subcommand(&argv) {
        (Some(path), Some(sub)) => match merge_config(&argv, &sub, &path) {
            Ok(merged) => merged,
            Err(e) => {
                eprintln!("error: {}", e.message);
                return e.class.exit_code();
            }
        },
        _ => argv,
    };
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(e) => return report(e),
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            eprintln!("error: cannot configure {} worker threads: {e}", cli.jobs);
            return ErrorClass::Validation.exit_code();
        }
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.class.exit_code()
        }
    }
}
