//! Minimum error rate training: coordinate ascent over linear feature
//! weights with exact line search along each coordinate.
//!
//! Along coordinate `k` every candidate's score is the line
//! `a_i + gamma * b_i` with `a_i = sum_{j != k} w_j f_ij` and `b_i = f_ik`.
//! Each segment's upper envelope tells which candidate wins for every
//! `gamma`; merging all envelope breakpoints gives the intervals on which
//! the corpus selection is constant, and the objective is updated
//! incrementally from one interval to the next.

pub mod envelope;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{NBestEntry, WeightsTable};
use crate::exact::ExactSum;
use crate::generation::{segment_rng, uniform01};
use crate::metrics::{bleu_stats, corpus_bleu, MetricError, ScoreRow, Scorer, SufficientStats};
use crate::rerank::{FeatureMatrix, LOGPROB};

pub use envelope::{upper_envelope, Envelope};

#[derive(Debug, Error)]
pub enum MertError {
    #[error("no features to tune")]
    NoFeatures,
    #[error("no segments to tune on")]
    NoSegments,
    #[error("segment {0} has no candidates")]
    NoCandidates(usize),
    #[error("segment {segment}: {message}")]
    Shape { segment: usize, message: String },
    #[error("segment {0} has no reference")]
    MissingReference(u64),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// BLEU over the summed sufficient statistics of the selections.
    CorpusBleu,
    /// Mean of the selected candidates' sentence scores.
    MeanSentenceScore,
}

/// One tuning segment: feature rows plus the quality of every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct MertSegment {
    pub features: Vec<Vec<f64>>,
    /// Needed by [`Objective::CorpusBleu`].
    pub stats: Vec<SufficientStats>,
    /// Needed by [`Objective::MeanSentenceScore`].
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MertInstance {
    pub feature_names: Vec<String>,
    pub segments: Vec<MertSegment>,
}

impl MertInstance {
    pub fn validate(&self, objective: Objective) -> Result<(), MertError> {
        if self.feature_names.is_empty() {
            return Err(MertError::NoFeatures);
        }
        if self.segments.is_empty() {
            return Err(MertError::NoSegments);
        }
        let k = self.feature_names.len();
        for (s, seg) in self.segments.iter().enumerate() {
            let n = seg.features.len();
            if n == 0 {
                return Err(MertError::NoCandidates(s));
            }
            let shape = |message: String| MertError::Shape {
                segment: s,
                message,
            };
            if seg.features.iter().any(|r| r.len() != k) {
                return Err(shape(format!("feature rows must have {k} columns")));
            }
            if seg.features.iter().flatten().any(|v| !v.is_finite()) {
                return Err(shape("non-finite feature value".into()));
            }
            match objective {
                Objective::CorpusBleu if seg.stats.len() != n => {
                    return Err(shape(format!(
                        "{} stats for {n} candidates",
                        seg.stats.len()
                    )))
                }
                Objective::MeanSentenceScore if seg.scores.len() != n => {
                    return Err(shape(format!(
                        "{} scores for {n} candidates",
                        seg.scores.len()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Tuning data from an N-best list with references, scoring every
    /// candidate once up front. `metric` is required for
    /// [`Objective::MeanSentenceScore`].
    pub fn from_nbest(
        entries: &[NBestEntry],
        features: &FeatureMatrix,
        objective: Objective,
        metric: Option<&dyn Scorer>,
    ) -> Result<MertInstance, MertError> {
        features
            .check_against(entries)
            .map_err(|e| MertError::Shape {
                segment: 0,
                message: e.to_string(),
            })?;
        let mut segments = Vec::with_capacity(entries.len());
        for (entry, block) in entries.iter().zip(&features.blocks) {
            let reference = entry
                .reference()
                .ok_or(MertError::MissingReference(entry.segment.id))?;
            let (stats, scores) = match objective {
                Objective::CorpusBleu => (
                    entry
                        .candidates
                        .iter()
                        .map(|c| bleu_stats(&c.text, reference))
                        .collect(),
                    Vec::new(),
                ),
                Objective::MeanSentenceScore => {
                    let metric = metric.ok_or_else(|| {
                        MertError::Metric(MetricError::Config(
                            "mean-score objective needs a metric".into(),
                        ))
                    })?;
                    let rows: Vec<ScoreRow<'_>> = entry
                        .candidates
                        .iter()
                        .map(|c| ScoreRow::new(&entry.segment.text, &c.text, Some(reference)))
                        .collect();
                    (Vec::new(), metric.score_batch(&rows)?)
                }
            };
            segments.push(MertSegment {
                features: block.rows.clone(),
                stats,
                scores,
            });
        }
        Ok(MertInstance {
            feature_names: features.names.clone(),
            segments,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MertConfig {
    pub objective: Objective,
    pub restarts: usize,
    pub max_iterations: usize,
    pub convergence_eps: f64,
    pub seed: u64,
}

impl Default for MertConfig {
    fn default() -> Self {
        MertConfig {
            objective: Objective::CorpusBleu,
            restarts: 8,
            max_iterations: 30,
            convergence_eps: 1e-6,
            seed: 0,
        }
    }
}

/// Running objective over a changing selection.
enum Accumulator {
    Bleu(SufficientStats),
    Mean { sum: ExactSum, count: usize },
}

impl Accumulator {
    fn new(objective: Objective, inst: &MertInstance, selection: &[usize]) -> Self {
        match objective {
            Objective::CorpusBleu => Accumulator::Bleu(
                inst.segments
                    .iter()
                    .zip(selection)
                    .map(|(seg, &i)| seg.stats[i])
                    .sum(),
            ),
            Objective::MeanSentenceScore => {
                let mut sum = ExactSum::new();
                for (seg, &i) in inst.segments.iter().zip(selection) {
                    sum.add(seg.scores[i]);
                }
                Accumulator::Mean {
                    sum,
                    count: selection.len(),
                }
            }
        }
    }

    fn swap(&mut self, seg: &MertSegment, old: usize, new: usize) {
        match self {
            Accumulator::Bleu(total) => {
                *total -= seg.stats[old];
                *total += seg.stats[new];
            }
            Accumulator::Mean { sum, .. } => {
                sum.add(-seg.scores[old]);
                sum.add(seg.scores[new]);
            }
        }
    }

    fn value(&self) -> f64 {
        match self {
            Accumulator::Bleu(total) => corpus_bleu(total),
            Accumulator::Mean { sum, count } => sum.value() / *count as f64,
        }
    }
}

/// Objective of an explicit per-segment selection, computed from scratch.
pub fn evaluate_selection(inst: &MertInstance, objective: Objective, selection: &[usize]) -> f64 {
    Accumulator::new(objective, inst, selection).value()
}

/// Per segment argmax of the weighted feature sum, ties to the lowest index.
pub fn select(inst: &MertInstance, weights: &[f64]) -> Vec<usize> {
    inst.segments
        .iter()
        .map(|seg| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (i, row) in seg.features.iter().enumerate() {
                let s: f64 = row.iter().zip(weights).map(|(f, w)| f * w).sum();
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            best
        })
        .collect()
}

pub fn evaluate_weights(inst: &MertInstance, objective: Objective, weights: &[f64]) -> f64 {
    evaluate_selection(inst, objective, &select(inst, weights))
}

/// Exact line search along coordinate `k`: returns the value for weight `k`
/// maximizing the objective (other weights fixed) and that objective.
///
/// The chosen value is the midpoint of the best interval; an unbounded best
/// interval yields a point one unit past the outermost breakpoint, and a
/// direction with no breakpoints yields 0.
pub fn line_search(
    inst: &MertInstance,
    weights: &[f64],
    k: usize,
    objective: Objective,
) -> (f64, f64) {
    let envelopes: Vec<Envelope> = inst
        .segments
        .par_iter()
        .map(|seg| {
            let lines: Vec<(f64, f64)> = seg
                .features
                .iter()
                .map(|row| {
                    let a: f64 = row
                        .iter()
                        .zip(weights)
                        .enumerate()
                        .filter(|&(j, _)| j != k)
                        .map(|(_, (f, w))| f * w)
                        .sum();
                    (a, row[k])
                })
                .collect();
            upper_envelope(&lines)
        })
        .collect();

    // (gamma, segment, interval index on the right of gamma)
    let mut events: Vec<(f64, usize, usize)> = envelopes
        .iter()
        .enumerate()
        .flat_map(|(s, env)| {
            env.breakpoints
                .iter()
                .enumerate()
                .map(move |(b, &g)| (g, s, b + 1))
        })
        .collect();
    events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut selection: Vec<usize> = envelopes.iter().map(|e| e.owners[0]).collect();
    let mut acc = Accumulator::new(objective, inst, &selection);
    let mut best_value = acc.value();
    // Interval as (left, right) breakpoints; None marks infinity.
    let mut best_interval: (Option<f64>, Option<f64>) = (None, events.first().map(|e| e.0));

    let mut i = 0;
    while i < events.len() {
        let gamma = events[i].0;
        while i < events.len() && events[i].0 == gamma {
            let (_, s, interval) = events[i];
            let new = envelopes[s].owners[interval];
            acc.swap(&inst.segments[s], selection[s], new);
            selection[s] = new;
            i += 1;
        }
        let value = acc.value();
        if value > best_value {
            best_value = value;
            best_interval = (Some(gamma), events.get(i).map(|e| e.0));
        }
    }

    let gamma = match best_interval {
        (Some(l), Some(r)) => 0.5 * (l + r),
        (Some(l), None) => l + 1.0,
        (None, Some(r)) => r - 1.0,
        (None, None) => 0.0,
    };
    (gamma, best_value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub iteration: usize,
    pub feature: String,
    pub weight: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct MertResult {
    /// L2-normalized weights of the best restart.
    pub weights: WeightsTable,
    pub objective: f64,
    /// Final objective of each restart.
    pub restart_objectives: Vec<f64>,
    /// Every accepted step, restart by restart.
    pub trace: Vec<TraceRecord>,
    /// Set when no weight vector can change any selection.
    pub degenerate: bool,
}

fn initial_weights(inst: &MertInstance, cfg: &MertConfig, restart: usize) -> Vec<f64> {
    let k = inst.feature_names.len();
    if restart == 0 {
        let mut w = vec![0.0; k];
        let lead = inst
            .feature_names
            .iter()
            .position(|n| n == LOGPROB)
            .unwrap_or(0);
        w[lead] = 1.0;
        w
    } else {
        let mut rng = segment_rng(cfg.seed, restart as u64);
        (0..k).map(|_| 2.0 * uniform01(&mut rng) - 1.0).collect()
    }
}

fn run_restart(
    inst: &MertInstance,
    cfg: &MertConfig,
    restart: usize,
) -> (Vec<f64>, f64, Vec<TraceRecord>) {
    let mut weights = initial_weights(inst, cfg, restart);
    let mut current = evaluate_weights(inst, cfg.objective, &weights);
    let mut trace = Vec::new();
    for iteration in 0..cfg.max_iterations {
        let mut accepted = false;
        for k in 0..weights.len() {
            let (gamma, value) = line_search(inst, &weights, k, cfg.objective);
            if value > current + cfg.convergence_eps {
                weights[k] = gamma;
                current = value;
                accepted = true;
                trace.push(TraceRecord {
                    restart,
                    iteration,
                    feature: inst.feature_names[k].clone(),
                    weight: gamma,
                    objective: value,
                });
            }
        }
        if !accepted {
            break;
        }
    }
    (weights, current, trace)
}

fn is_degenerate(inst: &MertInstance) -> bool {
    inst.segments
        .iter()
        .all(|seg| seg.features.iter().all(|row| row == &seg.features[0]))
}

fn to_table(names: &[String], weights: &[f64]) -> WeightsTable {
    names.iter().cloned().zip(weights.iter().copied()).collect()
}

/// Coordinate ascent with random restarts. Restart 0 starts from
/// `logprob = 1` (or the first feature when there is no `logprob` column);
/// the others draw each weight uniformly from [-1, 1] using stream
/// `restart` of `cfg.seed`. Restarts run in parallel; the best objective
/// wins, ties to the lowest restart index.
pub fn mert_optimize(inst: &MertInstance, cfg: &MertConfig) -> Result<MertResult, MertError> {
    inst.validate(cfg.objective)?;
    if is_degenerate(inst) {
        let weights = initial_weights(inst, cfg, 0);
        let objective = evaluate_weights(inst, cfg.objective, &weights);
        return Ok(MertResult {
            weights: to_table(&inst.feature_names, &weights),
            objective,
            restart_objectives: vec![objective],
            trace: Vec::new(),
            degenerate: true,
        });
    }
    let runs: Vec<(Vec<f64>, f64, Vec<TraceRecord>)> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| run_restart(inst, cfg, r))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 > runs[best].1 {
            best = r;
        }
    }
    let mut weights = runs[best].0.clone();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for w in &mut weights {
            *w /= norm;
        }
    }
    let objective = evaluate_weights(inst, cfg.objective, &weights);
    Ok(MertResult {
        weights: to_table(&inst.feature_names, &weights),
        objective,
        restart_objectives: runs.iter().map(|r| r.1).collect(),
        trace: runs.into_iter().flat_map(|r| r.2).collect(),
        degenerate: false,
    })
}
