//! On-disk data: N-best JSON-lines files, parallel text and weight tables.
//!
//! Text is never tokenized here. Metrics own tokenization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: parse error: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: {message}", path.display())]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("line count mismatch: {} has {src_lines} lines, {} has {ref_lines}", src_path.display(), ref_path.display())]
    Alignment {
        src_path: PathBuf,
        ref_path: PathBuf,
        src_lines: usize,
        ref_lines: usize,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSegment {
    pub id: u64,
    pub text: String,
}

/// One hypothesis together with its model score and extracted features.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub text: String,
    pub logprob: Option<f64>,
    pub features: BTreeMap<String, f64>,
    /// How many raw samples this candidate stands for.
    pub multiplicity: u32,
    /// Generation hit the length limit before emitting end-of-sequence.
    pub truncated: bool,
}

impl Candidate {
    pub fn new(text: impl Into<String>) -> Self {
        Candidate {
            text: text.into(),
            logprob: None,
            features: BTreeMap::new(),
            multiplicity: 1,
            truncated: false,
        }
    }

    pub fn with_logprob(mut self, logprob: f64) -> Self {
        self.logprob = Some(logprob);
        self
    }

    pub fn with_multiplicity(mut self, multiplicity: u32) -> Self {
        self.multiplicity = multiplicity;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub segment: SourceSegment,
    pub candidates: Vec<Candidate>,
    pub references: Vec<String>,
}

impl NBestEntry {
    pub fn new(id: u64, src: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        NBestEntry {
            segment: SourceSegment {
                id,
                text: src.into(),
            },
            candidates,
            references: Vec::new(),
        }
    }

    /// Total number of raw samples represented by the candidate list.
    pub fn sample_count(&self) -> u64 {
        self.candidates
            .iter()
            .map(|c| u64::from(c.multiplicity))
            .sum()
    }

    /// The single reference used by reference-based metrics, if any.
    pub fn reference(&self) -> Option<&str> {
        self.references.first().map(String::as_str)
    }
}

/// Collapse candidates with identical text into one candidate carrying the
/// summed multiplicity. The first occurrence keeps its position, score and
/// features.
pub fn dedup_candidates(candidates: &[Candidate]) -> Vec<Candidate> {
    let mut seen: IndexMap<&str, usize> = IndexMap::new();
    let mut out: Vec<Candidate> = Vec::new();
    for cand in candidates {
        match seen.get(cand.text.as_str()) {
            Some(&pos) => out[pos].multiplicity += cand.multiplicity,
            None => {
                seen.insert(&cand.text, out.len());
                out.push(cand.clone());
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct HypRecord {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    features: BTreeMap<String, f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    count: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    truncated: bool,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    id: u64,
    src: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    refs: Vec<String>,
    hyps: Vec<HypRecord>,
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

fn check_record(rec: &EntryRecord) -> Result<(), String> {
    if rec.src.contains('\n') {
        return Err("source text contains a newline".into());
    }
    if rec.refs.iter().any(|r| r.contains('\n')) {
        return Err("reference contains a newline".into());
    }
    for (i, hyp) in rec.hyps.iter().enumerate() {
        if hyp.text.contains('\n') {
            return Err(format!("hypothesis {i} contains a newline"));
        }
        if hyp.count == 0 {
            return Err(format!("hypothesis {i} has count 0"));
        }
        if let Some(lp) = hyp.logprob {
            if !lp.is_finite() || lp > 0.0 {
                return Err(format!("hypothesis {i} has invalid logprob {lp}"));
            }
        }
        if let Some((name, v)) = hyp.features.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("hypothesis {i} has non-finite feature {name}={v}"));
        }
    }
    Ok(())
}

fn entry_from_record(rec: EntryRecord) -> NBestEntry {
    NBestEntry {
        segment: SourceSegment {
            id: rec.id,
            text: rec.src,
        },
        candidates: rec
            .hyps
            .into_iter()
            .map(|h| Candidate {
                text: h.text,
                logprob: h.logprob,
                features: h.features,
                multiplicity: h.count,
                truncated: h.truncated,
            })
            .collect(),
        references: rec.refs,
    }
}

fn record_from_entry(entry: &NBestEntry) -> EntryRecord {
    EntryRecord {
        id: entry.segment.id,
        src: entry.segment.text.clone(),
        refs: entry.references.clone(),
        hyps: entry
            .candidates
            .iter()
            .map(|c| HypRecord {
                text: c.text.clone(),
                logprob: c.logprob,
                features: c.features.clone(),
                count: c.multiplicity,
                truncated: c.truncated,
            })
            .collect(),
    }
}

/// Read an N-best JSON-lines file, preserving duplicate candidates.
pub fn read_nbest(path: impl AsRef<Path>) -> Result<Vec<NBestEntry>, CorpusError> {
    read_nbest_with(path, false)
}

/// Read an N-best JSON-lines file; with `dedup` set, identical candidate
/// texts within a segment are merged into multiplicity counts.
pub fn read_nbest_with(
    path: impl AsRef<Path>,
    dedup: bool,
) -> Result<Vec<NBestEntry>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut entries: Vec<NBestEntry> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EntryRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let validation = |message: String| CorpusError::Validation {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        check_record(&rec).map_err(validation)?;
        if let Some(prev) = entries.last() {
            if rec.id == prev.segment.id {
                return Err(validation(format!("duplicate id {}", rec.id)));
            }
            if rec.id < prev.segment.id {
                return Err(validation(format!(
                    "id {} is not greater than previous id {}",
                    rec.id, prev.segment.id
                )));
            }
        }
        let mut entry = entry_from_record(rec);
        if dedup {
            entry.candidates = dedup_candidates(&entry.candidates);
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_nbest(entries: &[NBestEntry], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for entry in entries {
        let line =
            serde_json::to_string(&record_from_entry(entry)).expect("records always serialize");
        writeln!(out, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}

/// Read a text file as one segment per line. CRLF endings are normalized and
/// a trailing newline does not produce an extra empty segment.
pub fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>, CorpusError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut lines: Vec<String> = content
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

pub fn read_parallel(
    src_path: impl AsRef<Path>,
    ref_path: impl AsRef<Path>,
) -> Result<Vec<(String, String)>, CorpusError> {
    let (src_path, ref_path) = (src_path.as_ref(), ref_path.as_ref());
    let srcs = read_lines(src_path)?;
    let refs = read_lines(ref_path)?;
    if srcs.len() != refs.len() {
        return Err(CorpusError::Alignment {
            src_path: src_path.to_path_buf(),
            ref_path: ref_path.to_path_buf(),
            src_lines: srcs.len(),
            ref_lines: refs.len(),
        });
    }
    Ok(srcs.into_iter().zip(refs).collect())
}

pub fn write_lines(lines: &[String], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut buf = String::new();
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

/// Named linear feature weights, in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightsTable {
    entries: IndexMap<String, f64>,
}

impl WeightsTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous weight if `name` was already present.
    pub fn insert(&mut self, name: impl Into<String>, weight: f64) -> Option<f64> {
        self.entries.insert(name.into(), weight)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn has_nonzero(&self) -> bool {
        self.entries.values().any(|w| *w != 0.0)
    }

    /// Multiply every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> WeightsTable {
        WeightsTable {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v * factor))
                .collect(),
        }
    }
}

impl FromIterator<(String, f64)> for WeightsTable {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        WeightsTable {
            entries: iter.into_iter().collect(),
        }
    }
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightsTable, CorpusError> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let mut table = WeightsTable::new();
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let (name, value) = line
            .split_once('\t')
            .ok_or_else(|| parse("expected `name<TAB>weight`".into()))?;
        let weight: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse(format!("weight {value:?} is not a number")))?;
        if !weight.is_finite() {
            return Err(parse(format!("weight {value:?} is not finite")));
        }
        if table.insert(name, weight).is_some() {
            return Err(CorpusError::Validation {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("repeated weight name {name:?}"),
            });
        }
    }
    Ok(table)
}

/// Writes `name<TAB>weight` lines. Weights use the shortest decimal that
/// parses back to the same value.
pub fn write_weights(table: &WeightsTable, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let lines: Vec<String> = table.iter().map(|(k, v)| format!("{k}\t{v:?}")).collect();
    write_lines(&lines, path)
}
