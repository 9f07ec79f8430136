//! Lexical metrics and the uniform scorer interface used by the rankers.
//!
//! Only BLEU and chrF are built in. Learned metrics run out of process
//! behind [`external::ExternalScorer`]. Higher scores are always better.

pub mod bleu;
pub mod chrf;
pub mod external;
pub mod tokenize;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu_stats, corpus_bleu, sentence_bleu, smoothed_bleu, SufficientStats};
pub use chrf::{chrf_from_stats, chrf_stats, sentence_chrf, ChrfStats};
pub use external::{ExternalScorer, ExternalScorerConfig};
pub use tokenize::tokenize_13a;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid metric configuration: {0}")]
    Config(String),
    #[error("row {row}: {message}")]
    Contract { row: usize, message: String },
    #[error("failed to launch scorer: {0}")]
    Launch(String),
    #[error("scorer handshake failed: {0}")]
    Handshake(String),
    #[error("scorer did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("scorer protocol error on response line {line}: {message}")]
    Protocol { line: usize, message: String },
    #[error("scorer exited prematurely ({0})")]
    Crash(String),
    #[error("segment {segment}, candidate {candidate}: {source}")]
    At {
        segment: u64,
        candidate: usize,
        #[source]
        source: Box<MetricError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ReferenceBased,
    ReferenceFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    BuiltinBleu,
    BuiltinChrf,
    External(ExternalScorerConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub kind: MetricKind,
    pub backend: Backend,
}

impl MetricSpec {
    pub fn bleu() -> Self {
        MetricSpec {
            name: "bleu".into(),
            kind: MetricKind::ReferenceBased,
            backend: Backend::BuiltinBleu,
        }
    }

    pub fn chrf() -> Self {
        MetricSpec {
            name: "chrf".into(),
            kind: MetricKind::ReferenceBased,
            backend: Backend::BuiltinChrf,
        }
    }

    pub fn external(
        name: impl Into<String>,
        kind: MetricKind,
        config: ExternalScorerConfig,
    ) -> Self {
        MetricSpec {
            name: name.into(),
            kind,
            backend: Backend::External(config),
        }
    }

    /// Parse `bleu`, `chrf` or `external:<command line>`. External specs
    /// take `kind`; the scorer's handshake must agree with it.
    pub fn parse(text: &str, kind: MetricKind) -> Result<Self, MetricError> {
        match text {
            "bleu" => Ok(MetricSpec::bleu()),
            "chrf" => Ok(MetricSpec::chrf()),
            _ => match text.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => {
                    let config = ExternalScorerConfig::from_command_line(cmd);
                    let name = std::path::Path::new(&config.command[0])
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "external".into());
                    Ok(MetricSpec::external(name, kind, config))
                }
                _ => Err(MetricError::Config(format!("unknown metric {text:?}"))),
            },
        }
    }
}

/// One scoring request. `reference` is present iff the metric is
/// reference-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreRow<'a> {
    pub src: &'a str,
    pub hyp: &'a str,
    pub reference: Option<&'a str>,
}

impl<'a> ScoreRow<'a> {
    pub fn new(src: &'a str, hyp: &'a str, reference: Option<&'a str>) -> Self {
        ScoreRow {
            src,
            hyp,
            reference,
        }
    }
}

pub(crate) fn check_row(
    kind: MetricKind,
    row: &ScoreRow<'_>,
    index: usize,
) -> Result<(), MetricError> {
    match (kind, row.reference) {
        (MetricKind::ReferenceBased, None) => Err(MetricError::Contract {
            row: index,
            message: "reference-based metric called without a reference".into(),
        }),
        (MetricKind::ReferenceFree, Some(_)) => Err(MetricError::Contract {
            row: index,
            message: "reference-free metric called with a reference".into(),
        }),
        _ => Ok(()),
    }
}

/// A sentence-level metric. Implementations must be deterministic.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> MetricKind;

    fn score_batch(&self, rows: &[ScoreRow<'_>]) -> Result<Vec<f64>, MetricError>;

    fn score(&self, src: &str, hyp: &str, reference: Option<&str>) -> Result<f64, MetricError> {
        let scores = self.score_batch(&[ScoreRow::new(src, hyp, reference)])?;
        Ok(scores[0])
    }
}

impl fmt::Debug for dyn Scorer + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scorer({})", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinMetric {
    Bleu,
    Chrf,
}

impl FromStr for BuiltinMetric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(BuiltinMetric::Bleu),
            "chrf" => Ok(BuiltinMetric::Chrf),
            other => Err(MetricError::Config(format!(
                "unknown builtin metric {other:?}"
            ))),
        }
    }
}

impl Scorer for BuiltinMetric {
    fn name(&self) -> &str {
        match self {
            BuiltinMetric::Bleu => "bleu",
            BuiltinMetric::Chrf => "chrf",
        }
    }

    fn kind(&self) -> MetricKind {
        MetricKind::ReferenceBased
    }

    fn score_batch(&self, rows: &[ScoreRow<'_>]) -> Result<Vec<f64>, MetricError> {
        for (i, row) in rows.iter().enumerate() {
            check_row(MetricKind::ReferenceBased, row, i)?;
        }
        let pairs = || {
            rows.par_iter()
                .map(|r| (r.hyp, r.reference.unwrap_or_default()))
        };
        Ok(match self {
            BuiltinMetric::Bleu => {
                // Batches (MBR especially) repeat the same strings many times.
                let mut tokens: HashMap<&str, Vec<String>> = HashMap::new();
                for row in rows {
                    for text in [row.hyp, row.reference.unwrap_or_default()] {
                        tokens.entry(text).or_insert_with(|| tokenize_13a(text));
                    }
                }
                pairs()
                    .map(|(h, r)| smoothed_bleu(&bleu::stats_from_tokens(&tokens[h], &tokens[r])))
                    .collect()
            }
            BuiltinMetric::Chrf => pairs().map(|(h, r)| sentence_chrf(h, r)).collect(),
        })
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> &str {
        ExternalScorer::name(self)
    }

    fn kind(&self) -> MetricKind {
        ExternalScorer::kind(self)
    }

    fn score_batch(&self, rows: &[ScoreRow<'_>]) -> Result<Vec<f64>, MetricError> {
        self.score(rows)
    }
}

/// Instantiate the scorer behind a spec. External scorers are launched here
/// and must announce the kind the spec declares.
pub fn metric_fn(spec: &MetricSpec) -> Result<Box<dyn Scorer>, MetricError> {
    match &spec.backend {
        Backend::BuiltinBleu | Backend::BuiltinChrf if spec.kind != MetricKind::ReferenceBased => {
            Err(MetricError::Config(format!(
                "builtin metric {} is reference-based",
                spec.name
            )))
        }
        Backend::BuiltinBleu => Ok(Box::new(BuiltinMetric::Bleu)),
        Backend::BuiltinChrf => Ok(Box::new(BuiltinMetric::Chrf)),
        Backend::External(config) => {
            let scorer = ExternalScorer::spawn(config)?;
            if scorer.kind() != spec.kind {
                return Err(MetricError::Handshake(format!(
                    "scorer {} announced {:?}, expected {:?}",
                    scorer.name(),
                    scorer.kind(),
                    spec.kind
                )));
            }
            Ok(Box::new(scorer))
        }
    }
}
