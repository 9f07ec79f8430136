//! Fixed (single feature) and tuned (weighted linear) N-best reranking.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, NBestEntry, WeightsTable};
use crate::metrics::{MetricError, MetricKind, ScoreRow, Scorer};

/// Reserved feature name for the model log-probability.
pub const LOGPROB: &str = "logprob";

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("segment {0} has no candidates")]
    NoCandidates(u64),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("segment {segment}, candidate {candidate}: {message}")]
    MissingValue {
        segment: u64,
        candidate: usize,
        message: String,
    },
    #[error("feature matrix does not match the N-best list: {0}")]
    Mismatch(String),
    #[error("feature {0:?} must come from a reference-free metric")]
    NotReferenceFree(String),
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("weights have no nonzero entry")]
    ZeroWeights,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Feature values of one segment: one row per candidate, one column per
/// feature name.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub id: u64,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub blocks: Vec<FeatureBlock>,
}

impl FeatureMatrix {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Build from the log-probabilities and feature maps stored in the
    /// N-best list. Every candidate must carry every feature.
    pub fn from_entries(entries: &[NBestEntry]) -> Result<FeatureMatrix, RerankError> {
        let mut names = vec![LOGPROB.to_string()];
        if let Some(first) = entries.iter().flat_map(|e| e.candidates.first()).next() {
            names.extend(
                first
                    .features
                    .keys()
                    .filter(|k| k.as_str() != LOGPROB)
                    .cloned(),
            );
        }
        let mut blocks = Vec::with_capacity(entries.len());
        for entry in entries {
            let mut rows = Vec::with_capacity(entry.candidates.len());
            for (ci, cand) in entry.candidates.iter().enumerate() {
                let missing = |name: &str| RerankError::MissingValue {
                    segment: entry.segment.id,
                    candidate: ci,
                    message: format!("no value for feature {name:?}"),
                };
                let mut row = Vec::with_capacity(names.len());
                row.push(cand.logprob.ok_or_else(|| missing(LOGPROB))?);
                for name in &names[1..] {
                    row.push(*cand.features.get(name).ok_or_else(|| missing(name))?);
                }
                rows.push(row);
            }
            blocks.push(FeatureBlock {
                id: entry.segment.id,
                rows,
            });
        }
        Ok(FeatureMatrix { names, blocks })
    }

    pub fn check_against(&self, entries: &[NBestEntry]) -> Result<(), RerankError> {
        if self.blocks.len() != entries.len() {
            return Err(RerankError::Mismatch(format!(
                "{} feature blocks for {} segments",
                self.blocks.len(),
                entries.len()
            )));
        }
        for (block, entry) in self.blocks.iter().zip(entries) {
            if block.id != entry.segment.id || block.rows.len() != entry.candidates.len() {
                return Err(RerankError::Mismatch(format!(
                    "segment {}",
                    entry.segment.id
                )));
            }
            if block.rows.iter().any(|r| r.len() != self.names.len()) {
                return Err(RerankError::Mismatch(format!(
                    "segment {} has ragged rows",
                    entry.segment.id
                )));
            }
        }
        Ok(())
    }
}

/// A feature column source: the stored log-probability or a
/// reference-free scorer.
pub enum FeatureSource<'a> {
    Logprob,
    Metric(&'a dyn Scorer),
}

impl FeatureSource<'_> {
    fn name(&self) -> &str {
        match self {
            FeatureSource::Logprob => LOGPROB,
            FeatureSource::Metric(s) => s.name(),
        }
    }
}

/// Score every candidate under every source. Each scorer receives one batch
/// covering the whole corpus.
pub fn extract_features(
    entries: &[NBestEntry],
    sources: &[FeatureSource<'_>],
) -> Result<FeatureMatrix, RerankError> {
    let mut names: Vec<String> = Vec::with_capacity(sources.len());
    for source in sources {
        let name = source.name().to_string();
        if let FeatureSource::Metric(s) = source {
            if s.kind() != MetricKind::ReferenceFree {
                return Err(RerankError::NotReferenceFree(name));
            }
        }
        if names.contains(&name) {
            return Err(RerankError::DuplicateFeature(name));
        }
        names.push(name);
    }
    let coords: Vec<(usize, usize)> = entries
        .iter()
        .enumerate()
        .flat_map(|(si, e)| (0..e.candidates.len()).map(move |ci| (si, ci)))
        .collect();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(sources.len());
    for source in sources {
        let column = match source {
            FeatureSource::Logprob => coords
                .iter()
                .map(|&(si, ci)| {
                    entries[si].candidates[ci]
                        .logprob
                        .ok_or_else(|| RerankError::MissingValue {
                            segment: entries[si].segment.id,
                            candidate: ci,
                            message: "candidate has no logprob".into(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?,
            FeatureSource::Metric(scorer) => {
                let rows: Vec<ScoreRow<'_>> = coords
                    .iter()
                    .map(|&(si, ci)| {
                        ScoreRow::new(
                            &entries[si].segment.text,
                            &entries[si].candidates[ci].text,
                            None,
                        )
                    })
                    .collect();
                scorer
                    .score_batch(&rows)
                    .map_err(|e| locate_error(e, &coords, entries))?
            }
        };
        columns.push(column);
    }
    let mut blocks: Vec<FeatureBlock> = entries
        .iter()
        .map(|e| FeatureBlock {
            id: e.segment.id,
            rows: vec![Vec::with_capacity(sources.len()); e.candidates.len()],
        })
        .collect();
    for column in &columns {
        for (&(si, ci), &v) in coords.iter().zip(column) {
            blocks[si].rows[ci].push(v);
        }
    }
    Ok(FeatureMatrix { names, blocks })
}

fn locate_error(
    err: MetricError,
    coords: &[(usize, usize)],
    entries: &[NBestEntry],
) -> MetricError {
    let row = match &err {
        MetricError::Protocol { line, .. } => line.checked_sub(1),
        MetricError::Contract { row, .. } => Some(*row),
        _ => None,
    };
    match row.and_then(|r| coords.get(r)) {
        Some(&(si, ci)) => MetricError::At {
            segment: entries[si].segment.id,
            candidate: ci,
            source: Box::new(err),
        },
        None => err,
    }
}

/// The chosen candidate of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub id: u64,
    pub index: usize,
    pub text: String,
    pub score: f64,
    /// Winning score minus the runner-up's (0 with a single candidate).
    pub margin: f64,
}

/// Argmax over `scores`, ties to the lowest index, with the margin to the
/// runner-up.
pub fn argmax_with_margin(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    let best = best?;
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = if runner_up == f64::NEG_INFINITY {
        0.0
    } else {
        scores[best] - runner_up
    };
    Some((best, margin))
}

fn select(entry: &NBestEntry, scores: &[f64]) -> Result<Selection, RerankError> {
    let (index, margin) =
        argmax_with_margin(scores).ok_or(RerankError::NoCandidates(entry.segment.id))?;
    Ok(Selection {
        id: entry.segment.id,
        index,
        text: entry.candidates[index].text.clone(),
        score: scores[index],
        margin,
    })
}

/// Per segment, the candidate with the highest value in column `feature`.
pub fn rerank_fixed(
    entries: &[NBestEntry],
    features: &FeatureMatrix,
    feature: &str,
) -> Result<Vec<Selection>, RerankError> {
    features.check_against(entries)?;
    let col = features
        .column(feature)
        .ok_or_else(|| RerankError::UnknownFeature(feature.to_string()))?;
    entries
        .par_iter()
        .zip(&features.blocks)
        .map(|(entry, block)| {
            let scores: Vec<f64> = block.rows.iter().map(|r| r[col]).collect();
            select(entry, &scores)
        })
        .collect()
}

/// Resolve weight names to column indices.
pub fn weight_columns(
    features: &FeatureMatrix,
    weights: &WeightsTable,
) -> Result<Vec<(usize, f64)>, RerankError> {
    weights
        .iter()
        .map(|(name, w)| {
            features
                .column(name)
                .map(|c| (c, w))
                .ok_or_else(|| RerankError::UnknownFeature(name.to_string()))
        })
        .collect()
}

/// `sum_k w_k * f_k` for one candidate, accumulated in weight order.
pub fn linear_score(row: &[f64], weights: &[(usize, f64)]) -> f64 {
    weights.iter().map(|&(c, w)| w * row[c]).sum()
}

pub fn linear_scores(block: &FeatureBlock, weights: &[(usize, f64)]) -> Vec<f64> {
    block
        .rows
        .iter()
        .map(|r| linear_score(r, weights))
        .collect()
}

/// Per segment, the candidate maximizing the weighted feature sum.
pub fn rerank_tuned(
    entries: &[NBestEntry],
    features: &FeatureMatrix,
    weights: &WeightsTable,
) -> Result<Vec<Selection>, RerankError> {
    features.check_against(entries)?;
    if !weights.has_nonzero() {
        return Err(RerankError::ZeroWeights);
    }
    let cols = weight_columns(features, weights)?;
    entries
        .par_iter()
        .zip(&features.blocks)
        .map(|(entry, block)| select(entry, &linear_scores(block, &cols)))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    id: u64,
    features: Vec<serde_json::Map<String, serde_json::Value>>,
}

/// Write the feature cache: one JSON line per segment holding one
/// `{name: value}` object per candidate.
pub fn write_feature_cache(
    features: &FeatureMatrix,
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for block in &features.blocks {
        let rec = CacheRecord {
            id: block.id,
            features: block
                .rows
                .iter()
                .map(|row| {
                    features
                        .names
                        .iter()
                        .zip(row)
                        .map(|(n, v)| (n.clone(), serde_json::Value::from(*v)))
                        .collect()
                })
                .collect(),
        };
        let line = serde_json::to_string(&rec).expect("cache record serializes");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<FeatureMatrix, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut names: Option<Vec<String>> = None;
    let mut blocks = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| CorpusError::Validation {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let mut rows = Vec::with_capacity(rec.features.len());
        for obj in &rec.features {
            let cols = names.get_or_insert_with(|| obj.keys().cloned().collect());
            if obj.len() != cols.len() {
                return Err(invalid(
                    "feature columns differ from the first record".into(),
                ));
            }
            let row = cols
                .iter()
                .map(|n| {
                    obj.get(n)
                        .and_then(serde_json::Value::as_f64)
                        .ok_or_else(|| invalid(format!("missing or non-numeric feature {n:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        blocks.push(FeatureBlock { id: rec.id, rows });
    }
    Ok(FeatureMatrix {
        names: names.unwrap_or_default(),
        blocks,
    })
}

/// Copy feature values into the candidates' feature maps (logprob excluded).
pub fn attach_features(
    entries: &mut [NBestEntry],
    features: &FeatureMatrix,
) -> Result<(), RerankError> {
    features.check_against(entries)?;
    for (entry, block) in entries.iter_mut().zip(&features.blocks) {
        for (cand, row) in entry.candidates.iter_mut().zip(&block.rows) {
            let map: BTreeMap<String, f64> = features
                .names
                .iter()
                .zip(row)
                .filter(|(n, _)| n.as_str() != LOGPROB)
                .map(|(n, v)| (n.clone(), *v))
                .collect();
            cand.features.extend(map);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Candidate;

    fn entry(id: u64, logprobs: &[f64]) -> NBestEntry {
        NBestEntry::new(
            id,
            format!("src {id}"),
            logprobs
                .iter()
                .enumerate()
                .map(|(i, &lp)| Candidate::new(format!("hyp {i}")).with_logprob(lp))
                .collect(),
        )
    }

    fn matrix(names: &[&str], blocks: Vec<Vec<Vec<f64>>>) -> FeatureMatrix {
        FeatureMatrix {
            names: names.iter().map(|s| s.to_string()).collect(),
            blocks: blocks
                .into_iter()
                .enumerate()
                .map(|(i, rows)| FeatureBlock { id: i as u64, rows })
                .collect(),
        }
    }

    struct Length;

    impl Scorer for Length {
        fn name(&self) -> &str {
            "len"
        }
        fn kind(&self) -> MetricKind {
            MetricKind::ReferenceFree
        }
        fn score_batch(&self, rows: &[ScoreRow<'_>]) -> Result<Vec<f64>, MetricError> {
            Ok(rows
                .iter()
                .map(|r| r.hyp.split_whitespace().count() as f64)
                .collect())
        }
    }

    #[test]
    fn logprob_column_equals_stored() {
        let entries = vec![entry(0, &[-1.0, -2.0]), entry(1, &[-0.5])];
        let m = extract_features(&entries, &[FeatureSource::Logprob]).unwrap();
        assert_eq!(m.names, ["logprob"]);
        assert_eq!(m.blocks[0].rows, vec![vec![-1.0], vec![-2.0]]);
        assert_eq!(m, FeatureMatrix::from_entries(&entries).unwrap());
    }

    #[test]
    fn scorer_columns_and_shape() {
        let mut e = entry(0, &[-1.0; 5]);
        e.candidates[2].text = "a b c d".into();
        let m = extract_features(
            &[e],
            &[
                FeatureSource::Logprob,
                FeatureSource::Metric(&Length),
                FeatureSource::Metric(&Length),
            ],
        );
        assert!(matches!(m, Err(RerankError::DuplicateFeature(_))));
        let mut e = entry(0, &[-1.0; 5]);
        e.candidates[2].text = "a b c d".into();
        let m = extract_features(
            &[e],
            &[FeatureSource::Logprob, FeatureSource::Metric(&Length)],
        )
        .unwrap();
        assert_eq!(m.blocks[0].rows.len(), 5);
        assert!(m.blocks[0].rows.iter().all(|r| r.len() == 2));
        assert_eq!(m.blocks[0].rows[2][1], 4.0);
        assert_eq!(m.blocks[0].rows[0][1], 2.0);
    }

    #[test]
    fn fixed_tie_goes_to_lowest_index() {
        let entries = vec![entry(0, &[-1.0; 3])];
        let m = matrix(&["q"], vec![vec![vec![0.2], vec![0.9], vec![0.9]]]);
        let sel = rerank_fixed(&entries, &m, "q").unwrap();
        assert_eq!(sel[0].index, 1);
        assert_eq!(sel[0].margin, 0.0);
    }

    #[test]
    fn single_candidate_margin_zero() {
        let entries = vec![entry(0, &[-3.0])];
        let m = FeatureMatrix::from_entries(&entries).unwrap();
        let sel = rerank_fixed(&entries, &m, LOGPROB).unwrap();
        assert_eq!((sel[0].index, sel[0].margin), (0, 0.0));
    }

    #[test]
    fn empty_candidates_rejected() {
        let entries = vec![entry(7, &[])];
        let m = FeatureMatrix::from_entries(&entries).unwrap();
        assert!(matches!(
            rerank_fixed(&entries, &m, LOGPROB),
            Err(RerankError::NoCandidates(7))
        ));
    }

    #[test]
    fn tuned_hand_example() {
        let entries = vec![entry(0, &[-1.0, -1.0])];
        let m = matrix(&["f1", "f2"], vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]);
        let w: WeightsTable = [("f1".to_string(), 0.4), ("f2".to_string(), 0.6)]
            .into_iter()
            .collect();
        let sel = rerank_tuned(&entries, &m, &w).unwrap();
        assert_eq!(sel[0].index, 1);
        assert!((sel[0].score - 0.6).abs() < 1e-15);
        let bad: WeightsTable = [("f3".to_string(), 1.0)].into_iter().collect();
        assert!(matches!(
            rerank_tuned(&entries, &m, &bad),
            Err(RerankError::UnknownFeature(_))
        ));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.jsonl");
        let m = matrix(
            &["logprob", "qe"],
            vec![
                vec![vec![-1.5, 0.25], vec![-2.0, 0.5]],
                vec![vec![-0.1, 1e-9]],
            ],
        );
        write_feature_cache(&m, &p).unwrap();
        assert_eq!(read_feature_cache(&p).unwrap(), m);
    }
}
