//! End-to-end runs: generate, extract features, optionally tune on a dev
//! set, rank, evaluate. Every stage persists its output in the run
//! directory using the standard file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    read_lines, read_nbest_with, read_weights, write_lines, write_weights, CorpusError, NBestEntry,
    SourceSegment, WeightsTable,
};
use crate::error::{Classify, ErrorClass};
use crate::generation::{build_nbest, GenConfig, Method};
use crate::mbr::{mbr_corpus, two_stage_corpus, MbrConfig};
use crate::mert::{mert_optimize, MertConfig, MertInstance, Objective, TraceRecord};
use crate::metrics::{metric_fn, MetricError, MetricKind, MetricSpec, Scorer};
use crate::report::eval_report;
use crate::rerank::{
    extract_features, rerank_fixed, rerank_tuned, weight_columns, write_feature_cache,
    FeatureMatrix, FeatureSource, Selection, LOGPROB,
};
use crate::toy_model::{ModelError, ToyModel};

/// Stage failure. Outputs of earlier stages stay on disk.
#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub class: ErrorClass,
    pub message: String,
}

impl PipelineError {
    fn new(stage: &'static str, class: ErrorClass, message: impl Into<String>) -> Self {
        PipelineError {
            stage,
            class,
            message: message.into(),
        }
    }

    fn invalid(stage: &'static str, message: impl Into<String>) -> Self {
        PipelineError::new(stage, ErrorClass::Validation, message)
    }

    fn from_err<E: Classify + std::fmt::Display>(
        stage: &'static str,
    ) -> impl Fn(E) -> PipelineError {
        move |e| PipelineError::new(stage, e.class(), e.to_string())
    }
}

impl Classify for PipelineError {
    fn class(&self) -> ErrorClass {
        self.class
    }
}

/// Parse `key = value` lines. `#` starts a comment line; underscores in keys
/// are read as dashes. Keys may repeat.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

pub fn render_key_values(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMethod {
    Fixed,
    Tuned,
    Mbr,
    TwoStage,
}

impl FromStr for RankMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(RankMethod::Fixed),
            "tuned" => Ok(RankMethod::Tuned),
            "mbr" => Ok(RankMethod::Mbr),
            "two-stage" => Ok(RankMethod::TwoStage),
            _ => Err(format!(
                "unknown ranking method {s:?} (expected fixed, tuned, mbr or two-stage)"
            )),
        }
    }
}

impl std::fmt::Display for RankMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankMethod::Fixed => "fixed",
            RankMethod::Tuned => "tuned",
            RankMethod::Mbr => "mbr",
            RankMethod::TwoStage => "two-stage",
        })
    }
}

/// Tuning objective: corpus BLEU or the mean of a sentence metric.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    CorpusBleu,
    Mean(MetricSpec),
}

impl FromStr for ObjectiveSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "corpus_bleu" || s == "corpus-bleu" {
            return Ok(ObjectiveSpec::CorpusBleu);
        }
        match s.strip_prefix("mean:") {
            Some(m) => MetricSpec::parse(m, MetricKind::ReferenceBased)
                .map(ObjectiveSpec::Mean)
                .map_err(|e| e.to_string()),
            None => Err(format!(
                "unknown objective {s:?} (expected corpus_bleu or mean:<metric>)"
            )),
        }
    }
}

/// Every setting of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub dedup: bool,
    /// Per-segment model directory (see [`load_model_dir`]); exclusive with `nbest`.
    pub models: Option<PathBuf>,
    pub nbest: Option<PathBuf>,
    /// One reference per segment, in segment order.
    pub refs: Option<PathBuf>,
    pub method: Method,
    pub beam_size: usize,
    pub samples: usize,
    pub p: f64,
    pub max_len: usize,
    /// Feature columns: `logprob` or reference-free metric specs.
    pub features: Vec<String>,
    pub rank: RankMethod,
    pub rank_feature: String,
    pub weights: Option<PathBuf>,
    pub dev_models: Option<PathBuf>,
    pub dev_nbest: Option<PathBuf>,
    pub dev_refs: Option<PathBuf>,
    pub objective: String,
    pub restarts: usize,
    pub max_iterations: usize,
    pub utility: String,
    /// Pseudo-reference count for MBR (`None`: all candidates).
    pub pseudo_refs: Option<usize>,
    pub no_diagonal: bool,
    pub prune_to: Option<usize>,
    pub refs_from_full: bool,
    pub metrics: Vec<String>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gen = GenConfig::default();
        RunConfig {
            seed: 0,
            dedup: false,
            models: None,
            nbest: None,
            refs: None,
            method: gen.method,
            beam_size: gen.beam_size,
            samples: gen.num_samples,
            p: gen.nucleus_p,
            max_len: gen.max_len,
            features: vec![LOGPROB.to_string()],
            rank: RankMethod::Fixed,
            rank_feature: LOGPROB.to_string(),
            weights: None,
            dev_models: None,
            dev_nbest: None,
            dev_refs: None,
            objective: "corpus_bleu".into(),
            restarts: MertConfig::default().restarts,
            max_iterations: MertConfig::default().max_iterations,
            utility: "bleu".into(),
            pseudo_refs: None,
            no_diagonal: false,
            prune_to: None,
            refs_from_full: false,
            metrics: vec!["bleu".into(), "chrf".into()],
            out: PathBuf::from("run"),
        }
    }
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    /// The resolved settings as `key = value` pairs, in a fixed order.
    /// Thread count is not a setting: it never changes any output.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("dedup", self.dedup.to_string()),
            ("models", opt_path(&self.models)),
            ("nbest", opt_path(&self.nbest)),
            ("refs", opt_path(&self.refs)),
            ("method", self.method.to_string()),
            ("beam-size", self.beam_size.to_string()),
            ("samples", self.samples.to_string()),
            ("p", format!("{:?}", self.p)),
            ("max-len", self.max_len.to_string()),
        ];
        kv.extend(self.features.iter().map(|f| ("feature", f.clone())));
        kv.extend([
            ("rank", self.rank.to_string()),
            ("rank-feature", self.rank_feature.clone()),
            ("weights", opt_path(&self.weights)),
            ("dev-models", opt_path(&self.dev_models)),
            ("dev-nbest", opt_path(&self.dev_nbest)),
            ("dev-refs", opt_path(&self.dev_refs)),
            ("objective", self.objective.clone()),
            ("restarts", self.restarts.to_string()),
            ("max-iterations", self.max_iterations.to_string()),
            ("utility", self.utility.clone()),
            (
                "pseudo-refs",
                self.pseudo_refs.map_or("all".into(), |m| m.to_string()),
            ),
            ("no-diagonal", self.no_diagonal.to_string()),
            (
                "prune-to",
                self.prune_to.map(|m| m.to_string()).unwrap_or_default(),
            ),
            ("refs-from-full", self.refs_from_full.to_string()),
        ]);
        kv.extend(self.metrics.iter().map(|m| ("metric", m.clone())));
        kv.push(("out", self.out.display().to_string()));
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            method: self.method,
            beam_size: self.beam_size,
            num_samples: self.samples,
            nucleus_p: self.p,
            max_len: self.max_len,
            length_penalty: 0.0,
            seed: self.seed,
            dedup: self.dedup,
        }
    }

    pub fn mbr_config(&self) -> MbrConfig {
        MbrConfig {
            include_diagonal: !self.no_diagonal,
            num_pseudo_refs: self.pseudo_refs,
            prune_to: self.prune_to,
            refs_from_full: self.refs_from_full,
        }
    }
}

/// Load `<dir>/<id>.json` models, ordered by id. A model file may carry the
/// segment's source text in a `source` field.
pub fn load_model_dir(dir: &Path) -> Result<Vec<(SourceSegment, ToyModel)>, ModelError> {
    let io = |e: std::io::Error| ModelError::Io(format!("{}: {e}", dir.display()));
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for item in fs::read_dir(dir).map_err(io)? {
        let path = item.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let id = stem.parse::<u64>().map_err(|_| {
                ModelError::Invalid(format!("{}: file name is not a segment id", path.display()))
            })?;
            files.push((id, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(ModelError::Invalid(format!(
            "{}: no <id>.json models",
            dir.display()
        )));
    }
    files
        .into_iter()
        .map(|(id, path)| {
            let text = fs::read_to_string(&path)
                .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
            let with_path = |e: ModelError| ModelError::Invalid(format!("{}: {e}", path.display()));
            let model = ToyModel::from_json(&text).map_err(with_path)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| with_path(ModelError::Invalid(e.to_string())))?;
            let source = value
                .get("source")
                .and_then(|s| s.as_str())
                .unwrap_or_default()
                .to_string();
            Ok((SourceSegment { id, text: source }, model))
        })
        .collect()
}

/// Inverse of [`load_model_dir`].
pub fn save_model_dir(
    dir: &Path,
    segments: &[(SourceSegment, ToyModel)],
) -> Result<(), ModelError> {
    let io = |e: std::io::Error| ModelError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (segment, model) in segments {
        let mut value: serde_json::Value =
            serde_json::from_str(&model.to_json()).expect("model JSON parses");
        value["source"] = serde_json::Value::String(segment.text.clone());
        let text = serde_json::to_string_pretty(&value).expect("model serializes") + "\n";
        fs::write(dir.join(format!("{}.json", segment.id)), text).map_err(io)?;
    }
    Ok(())
}

/// Attach one reference line per entry.
pub fn attach_references(entries: &mut [NBestEntry], path: &Path) -> Result<(), CorpusError> {
    let refs = read_lines(path)?;
    if refs.len() != entries.len() {
        return Err(CorpusError::Validation {
            path: path.to_path_buf(),
            line: refs.len(),
            message: format!("{} references for {} segments", refs.len(), entries.len()),
        });
    }
    for (entry, r) in entries.iter_mut().zip(refs) {
        entry.references = vec![r];
    }
    Ok(())
}

/// Selections as JSON lines.
pub fn write_selections(selections: &[Selection], path: &Path) -> Result<(), CorpusError> {
    let mut text = String::new();
    for s in selections {
        text.push_str(&serde_json::to_string(s).expect("selection serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

pub fn write_trace(trace: &[TraceRecord], path: &Path) -> Result<(), CorpusError> {
    let mut text = String::new();
    for t in trace {
        text.push_str(&serde_json::to_string(t).expect("trace serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

/// Instantiate feature scorers; `logprob` needs none.
pub fn feature_scorers(features: &[String]) -> Result<Vec<Option<Box<dyn Scorer>>>, MetricError> {
    features
        .iter()
        .map(|f| {
            if f == LOGPROB {
                Ok(None)
            } else {
                metric_fn(&MetricSpec::parse(f, MetricKind::ReferenceFree)?).map(Some)
            }
        })
        .collect()
}

pub fn feature_sources<'a>(scorers: &'a [Option<Box<dyn Scorer>>]) -> Vec<FeatureSource<'a>> {
    scorers
        .iter()
        .map(|s| match s {
            None => FeatureSource::Logprob,
            Some(s) => FeatureSource::Metric(s.as_ref()),
        })
        .collect()
}

/// Everything a run wrote.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub files: Vec<PathBuf>,
    pub selections: Vec<Selection>,
    pub weights: Option<WeightsTable>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    files: Vec<PathBuf>,
}

impl Run<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.cfg.out.join(name);
        self.files.push(p.clone());
        p
    }
}

fn load_entries(
    cfg: &RunConfig,
    models: &Option<PathBuf>,
    nbest: &Option<PathBuf>,
    refs: &Option<PathBuf>,
    what: &str,
) -> Result<Vec<NBestEntry>, PipelineError> {
    const STAGE: &str = "generate";
    let mut entries = match (models, nbest) {
        (Some(dir), None) => {
            let segments = load_model_dir(dir).map_err(PipelineError::from_err(STAGE))?;
            if cfg.max_len == 0 || cfg.beam_size == 0 || cfg.samples == 0 {
                return Err(PipelineError::invalid(
                    STAGE,
                    "beam-size, samples and max-len must be positive",
                ));
            }
            build_nbest(&segments, &cfg.gen_config())
        }
        (None, Some(path)) => {
            read_nbest_with(path, cfg.dedup).map_err(PipelineError::from_err(STAGE))?
        }
        _ => {
            return Err(PipelineError::invalid(
                STAGE,
                format!("exactly one of {what}models and {what}nbest must be set"),
            ))
        }
    };
    if let Some(r) = refs {
        attach_references(&mut entries, r).map_err(PipelineError::from_err(STAGE))?;
    }
    Ok(entries)
}

/// Run every stage; outputs go to `cfg.out`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutputs, PipelineError> {
    let mut run = Run {
        cfg,
        files: Vec::new(),
    };
    let io = |stage: &'static str| {
        move |e: std::io::Error| PipelineError::new(stage, ErrorClass::Io, e.to_string())
    };
    fs::create_dir_all(&cfg.out).map_err(io("setup"))?;
    let config_path = run.path("run.config");
    fs::write(&config_path, render_key_values(&cfg.to_key_values())).map_err(io("setup"))?;

    let tunes = matches!(cfg.rank, RankMethod::Tuned | RankMethod::TwoStage);
    let has_dev = cfg.dev_models.is_some() || cfg.dev_nbest.is_some();
    if tunes && !has_dev && cfg.weights.is_none() {
        return Err(PipelineError::invalid(
            "setup",
            "tuned ranking needs weights or a dev set",
        ));
    }

    // generate
    let test = load_entries(cfg, &cfg.models, &cfg.nbest, &cfg.refs, "")?;
    let p = run.path("test.nbest.jsonl");
    crate::corpus::write_nbest(&test, &p).map_err(PipelineError::from_err("generate"))?;
    let dev = if tunes && has_dev {
        let dev = load_entries(cfg, &cfg.dev_models, &cfg.dev_nbest, &cfg.dev_refs, "dev-")?;
        let p = run.path("dev.nbest.jsonl");
        crate::corpus::write_nbest(&dev, &p).map_err(PipelineError::from_err("generate"))?;
        Some(dev)
    } else {
        None
    };

    // features
    let needs_features = cfg.rank != RankMethod::Mbr;
    let mut features: Option<FeatureMatrix> = None;
    let mut dev_features: Option<FeatureMatrix> = None;
    if needs_features {
        const STAGE: &str = "features";
        let scorers = feature_scorers(&cfg.features).map_err(PipelineError::from_err(STAGE))?;
        let sources = feature_sources(&scorers);
        let m = extract_features(&test, &sources).map_err(PipelineError::from_err(STAGE))?;
        let p = run.path("test.features.jsonl");
        write_feature_cache(&m, &p).map_err(PipelineError::from_err(STAGE))?;
        features = Some(m);
        if let Some(dev) = &dev {
            let m = extract_features(dev, &sources).map_err(PipelineError::from_err(STAGE))?;
            let p = run.path("dev.features.jsonl");
            write_feature_cache(&m, &p).map_err(PipelineError::from_err(STAGE))?;
            dev_features = Some(m);
        }
    }

    // mert
    let weights: Option<WeightsTable> =
        if let (Some(dev), Some(dev_features)) = (&dev, &dev_features) {
            const STAGE: &str = "mert";
            let objective: ObjectiveSpec = cfg
                .objective
                .parse()
                .map_err(|e: String| PipelineError::invalid(STAGE, e))?;
            let (objective, metric) = match objective {
                ObjectiveSpec::CorpusBleu => (Objective::CorpusBleu, None),
                ObjectiveSpec::Mean(spec) => (
                    Objective::MeanSentenceScore,
                    Some(metric_fn(&spec).map_err(PipelineError::from_err(STAGE))?),
                ),
            };
            let inst = MertInstance::from_nbest(dev, dev_features, objective, metric.as_deref())
                .map_err(PipelineError::from_err(STAGE))?;
            let mert_cfg = MertConfig {
                objective,
                restarts: cfg.restarts,
                max_iterations: cfg.max_iterations,
                seed: cfg.seed,
                ..Default::default()
            };
            let result = mert_optimize(&inst, &mert_cfg).map_err(PipelineError::from_err(STAGE))?;
            let p = run.path("weights.tsv");
            write_weights(&result.weights, &p).map_err(PipelineError::from_err(STAGE))?;
            let p = run.path("mert.trace.jsonl");
            write_trace(&result.trace, &p).map_err(PipelineError::from_err(STAGE))?;
            Some(result.weights)
        } else if tunes {
            let path = cfg.weights.as_ref().expect("checked above");
            Some(read_weights(path).map_err(PipelineError::from_err("mert"))?)
        } else {
            None
        };

    // rank
    const RANK: &str = "rank";
    let rank_err = PipelineError::from_err(RANK);
    let selections = match cfg.rank {
        RankMethod::Fixed => rerank_fixed(
            &test,
            features.as_ref().expect("features"),
            &cfg.rank_feature,
        )
        .map_err(rank_err)?,
        RankMethod::Tuned => rerank_tuned(
            &test,
            features.as_ref().expect("features"),
            weights.as_ref().expect("weights"),
        )
        .map_err(rank_err)?,
        RankMethod::Mbr | RankMethod::TwoStage => {
            let spec = MetricSpec::parse(&cfg.utility, MetricKind::ReferenceBased)
                .map_err(PipelineError::from_err(RANK))?;
            let utility = metric_fn(&spec).map_err(PipelineError::from_err(RANK))?;
            let mbr_cfg = cfg.mbr_config();
            if cfg.rank == RankMethod::Mbr {
                mbr_corpus(&test, utility.as_ref(), &mbr_cfg)
                    .map_err(PipelineError::from_err(RANK))?
            } else {
                let features = features.as_ref().expect("features");
                let w = weights.as_ref().expect("weights");
                if !w.has_nonzero() {
                    return Err(PipelineError::invalid(
                        RANK,
                        "weights have no nonzero entry",
                    ));
                }
                let cols = weight_columns(features, w).map_err(PipelineError::from_err(RANK))?;
                two_stage_corpus(&test, features, &cols, utility.as_ref(), &mbr_cfg)
                    .map_err(PipelineError::from_err(RANK))?
            }
        }
    };
    let p = run.path("selections.jsonl");
    write_selections(&selections, &p).map_err(PipelineError::from_err(RANK))?;
    let hyps: Vec<String> = selections.iter().map(|s| s.text.clone()).collect();
    let p = run.path("hyps.txt");
    write_lines(&hyps, &p).map_err(PipelineError::from_err(RANK))?;

    // eval
    if test.iter().all(|e| e.reference().is_some()) && !cfg.metrics.is_empty() {
        const STAGE: &str = "eval";
        let refs: Vec<String> = test
            .iter()
            .map(|e| e.reference().unwrap_or_default().to_string())
            .collect();
        let srcs: Vec<String> = test.iter().map(|e| e.segment.text.clone()).collect();
        let specs = cfg
            .metrics
            .iter()
            .map(|m| {
                MetricSpec::parse(m, MetricKind::ReferenceBased)
                    .or_else(|_| MetricSpec::parse(m, MetricKind::ReferenceFree))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(PipelineError::from_err(STAGE))?;
        let report =
            eval_report(&hyps, &refs, &srcs, &specs).map_err(PipelineError::from_err(STAGE))?;
        let p = run.path("eval.tsv");
        fs::write(&p, report.to_tsv()).map_err(io(STAGE))?;
        let p = run.path("eval.txt");
        fs::write(&p, report.to_text()).map_err(io(STAGE))?;
    }

    Ok(PipelineOutputs {
        files: run.files,
        selections,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values() {
        let kv = parse_key_values("# run\nseed = 3\n\nbeam_size=4\nfeature = external:a b = c\n")
            .unwrap();
        assert_eq!(
            kv,
            vec![
                ("seed".to_string(), "3".to_string()),
                ("beam-size".to_string(), "4".to_string()),
                ("feature".to_string(), "external:a b = c".to_string()),
            ]
        );
        assert!(parse_key_values("novalue\n")
            .unwrap_err()
            .contains("line 1"));
        assert_eq!(render_key_values(&kv[..1]), "seed = 3\n");
    }

    #[test]
    fn objective_specs() {
        assert_eq!(
            "corpus_bleu".parse::<ObjectiveSpec>().unwrap(),
            ObjectiveSpec::CorpusBleu
        );
        assert!(matches!(
            "mean:chrf".parse::<ObjectiveSpec>().unwrap(),
            ObjectiveSpec::Mean(_)
        ));
        assert!("bleu".parse::<ObjectiveSpec>().is_err());
    }
}
