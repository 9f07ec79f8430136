//! Minimum Bayes risk selection: each candidate's Monte Carlo expected
//! utility against the candidate pool used as pseudo-references, plus the
//! two-stage variant that first prunes with a tuned linear reranker.
//!
//! Expected utilities are compared exactly (see [`crate::exact`]), so the
//! selection never depends on summation order and ties always go to the
//! lowest candidate index.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::NBestEntry;
use crate::exact::{cmp_ratios, ExactSum};
use crate::metrics::{MetricError, MetricKind, ScoreRow, Scorer};
use crate::rerank::{linear_scores, FeatureBlock, FeatureMatrix, RerankError, Selection};

#[derive(Debug, Error)]
pub enum MbrError {
    #[error("segment {0} has no candidates")]
    NoCandidates(u64),
    #[error("MBR utility must be reference-based, {0:?} is reference-free")]
    NotReferenceBased(String),
    #[error("invalid MBR configuration: {0}")]
    Config(String),
    #[error("segment {segment}, utility({hyp}, {reference}): {source}")]
    Utility {
        segment: u64,
        hyp: usize,
        reference: usize,
        #[source]
        source: MetricError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbrConfig {
    /// Count the hypothesis itself among its pseudo-references.
    pub include_diagonal: bool,
    /// Use only the first M candidates as pseudo-references (`None`: all).
    pub num_pseudo_refs: Option<usize>,
    /// Two-stage: keep the top M candidates of the tuned reranker.
    pub prune_to: Option<usize>,
    /// Two-stage ablation: draw pseudo-references from the full list
    /// instead of the pruned one.
    pub refs_from_full: bool,
}

impl Default for MbrConfig {
    fn default() -> Self {
        MbrConfig {
            include_diagonal: true,
            num_pseudo_refs: None,
            prune_to: None,
            refs_from_full: false,
        }
    }
}

/// `values[r][c] = utility(src, hyp = candidates[hyps[r]], ref = candidates[refs[c]])`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    pub hyps: Vec<usize>,
    pub refs: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    /// Pseudo-reference multiplicities.
    pub ref_counts: Vec<u32>,
}

impl UtilityMatrix {
    /// Pseudo-reference weights, normalized to sum to 1.
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.ref_counts.iter().map(|&c| c as f64).sum();
        self.ref_counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Per column multiplicity seen by hypothesis row `r`. Without the
    /// diagonal, one unit of the hypothesis's own sample is removed; if
    /// that empties the row, the diagonal is kept.
    fn row_counts(&self, r: usize, include_diagonal: bool) -> Vec<u32> {
        let mut counts = self.ref_counts.clone();
        if !include_diagonal {
            if let Some(c) = self.refs.iter().position(|&j| j == self.hyps[r]) {
                counts[c] -= 1;
                if counts.iter().all(|&m| m == 0) {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    /// Exact numerator and denominator of row `r`'s expected utility.
    fn expectation(&self, r: usize, include_diagonal: bool) -> (ExactSum, f64) {
        let counts = self.row_counts(r, include_diagonal);
        let mut sum = ExactSum::new();
        let mut total = 0u64;
        for (&u, &m) in self.values[r].iter().zip(&counts) {
            if m > 0 {
                sum.add_product(u, m as f64);
                total += m as u64;
            }
        }
        (sum, total as f64)
    }

    /// Expected utility of every hypothesis row.
    pub fn expected_utilities(&self, include_diagonal: bool) -> Vec<f64> {
        (0..self.hyps.len())
            .map(|r| {
                let (sum, total) = self.expectation(r, include_diagonal);
                sum.value() / total
            })
            .collect()
    }

    /// Row with the highest expected utility, ties to the lowest row.
    pub fn argmax(&self, include_diagonal: bool) -> usize {
        let rows: Vec<(ExactSum, f64)> = (0..self.hyps.len())
            .map(|r| self.expectation(r, include_diagonal))
            .collect();
        let mut best = 0;
        for r in 1..rows.len() {
            if cmp_ratios(&rows[r].0, rows[r].1, &rows[best].0, rows[best].1) == Ordering::Greater {
                best = r;
            }
        }
        best
    }
}

fn check_utility(utility: &dyn Scorer) -> Result<(), MbrError> {
    if utility.kind() != MetricKind::ReferenceBased {
        return Err(MbrError::NotReferenceBased(utility.name().to_string()));
    }
    Ok(())
}

/// Score every (hypothesis, pseudo-reference) pair in one batch.
pub fn utility_matrix_over(
    entry: &NBestEntry,
    hyps: &[usize],
    refs: &[usize],
    utility: &dyn Scorer,
) -> Result<UtilityMatrix, MbrError> {
    if hyps.is_empty() || refs.is_empty() {
        return Err(MbrError::NoCandidates(entry.segment.id));
    }
    let cands = &entry.candidates;
    let src = entry.segment.text.as_str();
    let rows: Vec<ScoreRow<'_>> = hyps
        .iter()
        .flat_map(|&i| {
            refs.iter()
                .map(move |&j| ScoreRow::new(src, &cands[i].text, Some(&cands[j].text)))
        })
        .collect();
    let flat = utility.score_batch(&rows).map_err(|e| {
        let row = match &e {
            MetricError::Protocol { line, .. } => line.checked_sub(1),
            MetricError::Contract { row, .. } => Some(*row),
            _ => None,
        };
        match row.filter(|&r| r < rows.len()) {
            Some(r) => MbrError::Utility {
                segment: entry.segment.id,
                hyp: hyps[r / refs.len()],
                reference: refs[r % refs.len()],
                source: e,
            },
            None => MbrError::Metric(e),
        }
    })?;
    if let Some(r) = flat.iter().position(|u| !u.is_finite()) {
        return Err(MbrError::Utility {
            segment: entry.segment.id,
            hyp: hyps[r / refs.len()],
            reference: refs[r % refs.len()],
            source: MetricError::Contract {
                row: r,
                message: "non-finite utility".into(),
            },
        });
    }
    Ok(UtilityMatrix {
        hyps: hyps.to_vec(),
        refs: refs.to_vec(),
        values: flat.chunks(refs.len()).map(|c| c.to_vec()).collect(),
        ref_counts: refs.iter().map(|&j| cands[j].multiplicity).collect(),
    })
}

fn pseudo_refs(pool: &[usize], cfg: &MbrConfig) -> Result<Vec<usize>, MbrError> {
    match cfg.num_pseudo_refs {
        Some(0) => Err(MbrError::Config(
            "number of pseudo-references must be positive".into(),
        )),
        Some(m) => Ok(pool[..m.min(pool.len())].to_vec()),
        None => Ok(pool.to_vec()),
    }
}

/// Utility matrix of all candidates against the configured pseudo-references.
pub fn utility_matrix(
    entry: &NBestEntry,
    utility: &dyn Scorer,
    cfg: &MbrConfig,
) -> Result<UtilityMatrix, MbrError> {
    check_utility(utility)?;
    let all: Vec<usize> = (0..entry.candidates.len()).collect();
    utility_matrix_over(entry, &all, &pseudo_refs(&all, cfg)?, utility)
}

fn selection_from(entry: &NBestEntry, matrix: &UtilityMatrix, include_diagonal: bool) -> Selection {
    let best = matrix.argmax(include_diagonal);
    let eu = matrix.expected_utilities(include_diagonal);
    let runner_up = eu
        .iter()
        .enumerate()
        .filter(|&(r, _)| r != best)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = if runner_up == f64::NEG_INFINITY {
        0.0
    } else {
        (eu[best] - runner_up).max(0.0)
    };
    let index = matrix.hyps[best];
    Selection {
        id: entry.segment.id,
        index,
        text: entry.candidates[index].text.clone(),
        score: eu[best],
        margin,
    }
}

/// The candidate with maximal expected utility.
pub fn mbr_select(
    entry: &NBestEntry,
    utility: &dyn Scorer,
    cfg: &MbrConfig,
) -> Result<Selection, MbrError> {
    let matrix = utility_matrix(entry, utility, cfg)?;
    Ok(selection_from(entry, &matrix, cfg.include_diagonal))
}

/// Indices of the top `m` candidates by linear score (ties to the lowest
/// index), returned in original order.
pub fn prune(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order.sort_unstable();
    order
}

/// Prune to the reranker's top `cfg.prune_to`, then MBR over the survivors.
/// `weights` are `(column, weight)` pairs into `block`.
pub fn two_stage_select(
    entry: &NBestEntry,
    block: &FeatureBlock,
    weights: &[(usize, f64)],
    utility: &dyn Scorer,
    cfg: &MbrConfig,
) -> Result<Selection, MbrError> {
    check_utility(utility)?;
    let n = entry.candidates.len();
    if n == 0 {
        return Err(MbrError::NoCandidates(entry.segment.id));
    }
    let m = cfg.prune_to.unwrap_or(n);
    if m == 0 || m > n {
        return Err(MbrError::Config(format!(
            "segment {}: cannot prune {n} candidates to {m}",
            entry.segment.id
        )));
    }
    let kept = prune(&linear_scores(block, weights), m);
    let pool: Vec<usize> = if cfg.refs_from_full {
        (0..n).collect()
    } else {
        kept.clone()
    };
    let matrix = utility_matrix_over(entry, &kept, &pseudo_refs(&pool, cfg)?, utility)?;
    Ok(selection_from(entry, &matrix, cfg.include_diagonal))
}

/// [`mbr_select`] over a corpus, segments in parallel.
pub fn mbr_corpus(
    entries: &[NBestEntry],
    utility: &dyn Scorer,
    cfg: &MbrConfig,
) -> Result<Vec<Selection>, MbrError> {
    entries
        .par_iter()
        .map(|e| mbr_select(e, utility, cfg))
        .collect()
}

/// [`two_stage_select`] over a corpus, segments in parallel.
pub fn two_stage_corpus(
    entries: &[NBestEntry],
    features: &FeatureMatrix,
    weights: &[(usize, f64)],
    utility: &dyn Scorer,
    cfg: &MbrConfig,
) -> Result<Vec<Selection>, MbrError> {
    features.check_against(entries)?;
    entries
        .par_iter()
        .zip(&features.blocks)
        .map(|(e, b)| two_stage_select(e, b, weights, utility, cfg))
        .collect()
}
