//! Corpus-level evaluation tables and MQM score aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    bleu_stats, chrf_from_stats, chrf_stats, corpus_bleu, metric_fn, Backend, MetricError,
    MetricKind, MetricSpec, ScoreRow, Scorer,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{what}: {got} lines, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("MQM needs at least one segment")]
    NoSegments,
    #[error("MQM normalization must be positive and finite, got {0}")]
    BadNorm(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// How a metric is aggregated over the corpus.
pub enum EvalMetric<'a> {
    /// BLEU of the summed sufficient statistics.
    Bleu,
    /// chrF of the summed character n-gram statistics.
    Chrf,
    /// Mean of sentence scores.
    Mean(&'a dyn Scorer),
}

impl EvalMetric<'_> {
    pub fn name(&self) -> &str {
        match self {
            EvalMetric::Bleu => "bleu",
            EvalMetric::Chrf => "chrf",
            EvalMetric::Mean(s) => s.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Human-readable table, names left-aligned.
    pub fn to_text(&self) -> String {
        let width = self
            .scores
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max("metric".len());
        let mut out = format!("{:<width$}  score\n", "metric");
        for (name, v) in &self.scores {
            let _ = writeln!(out, "{name:<width$}  {v:.4}");
        }
        out
    }

    /// `metric<TAB>score` with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tscore\n");
        for (name, v) in &self.scores {
            let _ = writeln!(out, "{name}\t{v:.6}");
        }
        out
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), ReportError> {
    if got != expected {
        return Err(ReportError::Length {
            what,
            got,
            expected,
        });
    }
    Ok(())
}

/// Corpus scores of `hyps` under each metric.
pub fn eval_report_with(
    hyps: &[String],
    refs: &[String],
    srcs: &[String],
    metrics: &[EvalMetric<'_>],
) -> Result<EvalReport, ReportError> {
    check_len("references", refs.len(), hyps.len())?;
    check_len("sources", srcs.len(), hyps.len())?;
    let mut scores = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let value = match metric {
            EvalMetric::Bleu => {
                corpus_bleu(&hyps.iter().zip(refs).map(|(h, r)| bleu_stats(h, r)).sum())
            }
            EvalMetric::Chrf => {
                chrf_from_stats(&hyps.iter().zip(refs).map(|(h, r)| chrf_stats(h, r)).sum())
            }
            EvalMetric::Mean(scorer) => {
                let with_ref = scorer.kind() == MetricKind::ReferenceBased;
                let rows: Vec<ScoreRow<'_>> = hyps
                    .iter()
                    .zip(refs)
                    .zip(srcs)
                    .map(|((h, r), s)| ScoreRow::new(s, h, with_ref.then_some(r.as_str())))
                    .collect();
                let values = scorer.score_batch(&rows)?;
                if values.is_empty() {
                    0.0
                } else {
                    values.iter().sum::<f64>() / values.len() as f64
                }
            }
        };
        scores.push((metric.name().to_string(), value));
    }
    Ok(EvalReport { scores })
}

/// [`eval_report_with`] for metric specs; external scorers are launched for
/// the duration of the call.
pub fn eval_report(
    hyps: &[String],
    refs: &[String],
    srcs: &[String],
    specs: &[MetricSpec],
) -> Result<EvalReport, ReportError> {
    let mut scorers: Vec<Box<dyn Scorer>> = Vec::new();
    for spec in specs {
        if let Backend::External(_) = spec.backend {
            scorers.push(metric_fn(spec)?);
        }
    }
    let mut external = scorers.iter();
    let metrics: Vec<EvalMetric<'_>> = specs
        .iter()
        .map(|spec| match spec.backend {
            Backend::BuiltinBleu => EvalMetric::Bleu,
            Backend::BuiltinChrf => EvalMetric::Chrf,
            Backend::External(_) => EvalMetric::Mean(
                external
                    .next()
                    .expect("one scorer per external spec")
                    .as_ref(),
            ),
        })
        .collect();
    let mut report = eval_report_with(hyps, refs, srcs, &metrics)?;
    for ((name, _), spec) in report.scores.iter_mut().zip(specs) {
        name.clone_from(&spec.name);
    }
    Ok(report)
}

pub const DEFAULT_MQM_NORM: f64 = 25.0;

/// Error severity counts over a test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MqmCounts {
    pub minor: u64,
    pub major: u64,
    pub critical: u64,
    pub num_segments: u64,
}

impl MqmCounts {
    /// Severity-weighted error total: 1 per minor, 5 per major, 10 per critical.
    pub fn weighted(&self) -> f64 {
        (self.minor + 5 * self.major + 10 * self.critical) as f64
    }
}

/// `100 * (1 - W / (norm * segments))`, floored at 0.
pub fn mqm_score(counts: &MqmCounts, norm: f64) -> Result<f64, ReportError> {
    if counts.num_segments == 0 {
        return Err(ReportError::NoSegments);
    }
    if !(norm.is_finite() && norm > 0.0) {
        return Err(ReportError::BadNorm(norm));
    }
    Ok((100.0 * (1.0 - counts.weighted() / (norm * counts.num_segments as f64))).max(0.0))
}

/// Segment count under which `weighted` errors map to `score`; the inverse
/// of [`mqm_score`], used to probe published scores for consistency.
pub fn implied_segments(weighted: f64, score: f64, norm: f64) -> f64 {
    weighted / (norm * (1.0 - score / 100.0))
}
