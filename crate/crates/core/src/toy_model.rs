//! An order-k categorical autoregressive model with explicit conditional
//! tables. Small enough to enumerate every sequence it can produce, which
//! makes it the reference oracle for the search and sampling code.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::uniform01;

pub type TokenId = usize;

/// Marker that pads contexts before the first generated token.
pub const BEGIN_MARKER: &str = "<s>";
const BEGIN: TokenId = TokenId::MAX;
const CONTEXT_SEP: char = '|';

/// Row sums must be within this distance of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Default refusal bound for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training sequence {0} does not end with end-of-sequence")]
    MissingEos(usize),
    #[error("token {token} at position {position} is not in the vocabulary")]
    UnknownToken { token: String, position: usize },
    #[error("end-of-sequence at non-final position {0}")]
    EosNotFinal(usize),
    #[error("sequence must end with end-of-sequence")]
    Unterminated,
    #[error("sequence length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("enumeration of {vocab}^{max_len} sequences exceeds the budget of {budget}")]
    BudgetExceeded {
        vocab: usize,
        max_len: usize,
        budget: u64,
    },
    #[error("model file: {0}")]
    Io(String),
}

/// Token alphabet. Token order is significant: it breaks ties everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    eos: TokenId,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        eos: TokenId,
    ) -> Result<Self, ModelError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() < 2 {
            return Err(ModelError::Vocab("need at least two tokens".into()));
        }
        if eos >= tokens.len() {
            return Err(ModelError::Vocab(format!("eos index {eos} out of range")));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty()
                || t.contains(char::is_whitespace)
                || t.contains(CONTEXT_SEP)
                || t == BEGIN_MARKER
            {
                return Err(ModelError::Vocab(format!("unusable token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(ModelError::Vocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, eos, index })
    }

    /// Vocabulary `a, b, c, ...` of `n - 1` word tokens followed by `</s>`.
    pub fn letters(n: usize) -> Self {
        assert!((2..=27).contains(&n), "letters() supports 2..=27 tokens");
        let mut tokens: Vec<String> = (0..n - 1)
            .map(|i| ((b'a' + i as u8) as char).to_string())
            .collect();
        tokens.push("</s>".into());
        Vocab::new(tokens, n - 1).expect("letter vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Whitespace-split `line` into token ids, appending end-of-sequence
    /// unless the line already ends with it.
    pub fn encode(&self, line: &str) -> Result<Vec<TokenId>, ModelError> {
        let mut ids = line
            .split_whitespace()
            .enumerate()
            .map(|(position, t)| {
                self.id(t).ok_or_else(|| ModelError::UnknownToken {
                    token: t.to_string(),
                    position,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if ids.last() != Some(&self.eos) {
            ids.push(self.eos);
        }
        Ok(ids)
    }

    /// Space-joined text without the end-of-sequence token.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&t| t != self.eos)
            .map(|&t| self.tokens[t].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    epsilon: f64,
}

impl SmoothingConfig {
    pub fn new(epsilon: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(ModelError::Invalid(format!(
                "smoothing epsilon {epsilon} outside [0, 1]"
            )));
        }
        Ok(SmoothingConfig { epsilon })
    }

    pub fn none() -> Self {
        SmoothingConfig { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { epsilon: 0.1 }
    }
}

/// Order-k model: the next-token distribution depends on the last `order`
/// tokens of the begin-padded prefix. Contexts without a table row use the
/// uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    vocab: Vocab,
    order: usize,
    max_len: usize,
    rows: BTreeMap<Vec<TokenId>, Vec<f64>>,
    uniform: Vec<f64>,
}

impl ToyModel {
    /// Build a model from explicit rows keyed by context (most recent token
    /// last). Short contexts are left-padded with the begin marker.
    pub fn from_rows(
        vocab: Vocab,
        order: usize,
        max_len: usize,
        rows: impl IntoIterator<Item = (Vec<Option<TokenId>>, Vec<f64>)>,
    ) -> Result<Self, ModelError> {
        let mut model = ToyModel::uniform(vocab, order, max_len)?;
        for (ctx, row) in rows {
            if ctx.len() > order {
                return Err(ModelError::Invalid(format!(
                    "context of length {} for order {order}",
                    ctx.len()
                )));
            }
            let mut key = vec![BEGIN; order - ctx.len()];
            for t in ctx {
                match t {
                    Some(id) if id < model.vocab.len() => key.push(id),
                    Some(id) => {
                        return Err(ModelError::Invalid(format!("token id {id} out of range")))
                    }
                    None => key.push(BEGIN),
                }
            }
            model.check_row(&row)?;
            model.rows.insert(key, row);
        }
        Ok(model)
    }

    pub fn uniform(vocab: Vocab, order: usize, max_len: usize) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::Invalid("order must be at least 1".into()));
        }
        if max_len == 0 {
            return Err(ModelError::Invalid("max_len must be at least 1".into()));
        }
        let v = vocab.len();
        Ok(ToyModel {
            vocab,
            order,
            max_len,
            rows: BTreeMap::new(),
            uniform: vec![1.0 / v as f64; v],
        })
    }

    fn check_row(&self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.vocab.len() {
            return Err(ModelError::Invalid(format!(
                "row has {} entries for a vocabulary of {}",
                row.len(),
                self.vocab.len()
            )));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::Invalid(
                "row has a negative or non-finite probability".into(),
            ));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(ModelError::Invalid(format!("row sums to {sum}")));
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        assert!(max_len > 0);
        self.max_len = max_len;
        self
    }

    /// Stored rows as (context, distribution); `None` marks padding.
    pub fn rows(&self) -> impl Iterator<Item = (Vec<Option<TokenId>>, &[f64])> {
        self.rows.iter().map(|(k, v)| {
            (
                k.iter().map(|&t| (t != BEGIN).then_some(t)).collect(),
                v.as_slice(),
            )
        })
    }

    fn context_key(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let take = prefix.len().min(self.order);
        let mut key = vec![BEGIN; self.order - take];
        key.extend_from_slice(&prefix[prefix.len() - take..]);
        key
    }

    /// Distribution over the next token after `prefix`.
    pub fn next_distribution(&self, prefix: &[TokenId]) -> Result<&[f64], ModelError> {
        if let Some(pos) = prefix.iter().position(|&t| t == self.vocab.eos) {
            if pos + 1 != prefix.len() {
                return Err(ModelError::EosNotFinal(pos));
            }
        }
        if let Some(&bad) = prefix.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(ModelError::Invalid(format!("token id {bad} out of range")));
        }
        Ok(self.row_for(prefix))
    }

    pub(crate) fn row_for(&self, prefix: &[TokenId]) -> &[f64] {
        self.rows
            .get(&self.context_key(prefix))
            .map(Vec::as_slice)
            .unwrap_or(&self.uniform)
    }

    /// Log-probability of a complete sequence; `f64::NEG_INFINITY` when the
    /// sequence passes through a zero-probability transition.
    pub fn sequence_logprob(&self, seq: &[TokenId]) -> Result<f64, ModelError> {
        if seq.last() != Some(&self.vocab.eos) {
            return Err(ModelError::Unterminated);
        }
        if seq.len() > self.max_len {
            return Err(ModelError::TooLong {
                len: seq.len(),
                max_len: self.max_len,
            });
        }
        let mut total = 0.0;
        for t in 0..seq.len() {
            let p = self.next_distribution(&seq[..t])?[seq[t]];
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += p.ln();
        }
        Ok(total)
    }

    /// Shannon entropy (nats) of the row used after `prefix`.
    pub fn row_entropy(&self, prefix: &[TokenId]) -> f64 {
        entropy(self.row_for(prefix))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            vocab: self.vocab.tokens.clone(),
            eos_index: self.vocab.eos,
            order: self.order,
            max_len: self.max_len,
            rows: self
                .rows
                .iter()
                .map(|(k, v)| (self.context_string(k), v.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| ModelError::Invalid(format!("malformed model JSON: {e}")))?;
        let vocab = Vocab::new(file.vocab, file.eos_index)?;
        let mut rows = Vec::with_capacity(file.rows.len());
        for (ctx, row) in file.rows {
            let key = ctx
                .split(CONTEXT_SEP)
                .map(|t| {
                    if t == BEGIN_MARKER {
                        Ok(None)
                    } else {
                        vocab.id(t).map(Some).ok_or_else(|| {
                            ModelError::Invalid(format!("unknown token {t:?} in context {ctx:?}"))
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            if key.len() != file.order {
                return Err(ModelError::Invalid(format!(
                    "context {ctx:?} does not have {} tokens",
                    file.order
                )));
            }
            rows.push((key, row));
        }
        ToyModel::from_rows(vocab, file.order, file.max_len, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| ModelError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))?;
        ToyModel::from_json(&text)
    }

    fn context_string(&self, key: &[TokenId]) -> String {
        key.iter()
            .map(|&t| {
                if t == BEGIN {
                    BEGIN_MARKER
                } else {
                    self.vocab.token(t)
                }
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    vocab: Vec<String>,
    eos_index: usize,
    order: usize,
    max_len: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

pub fn entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Relative-frequency estimate mixed with the uniform distribution:
/// `P(t|c) = (1 - eps) * count(c, t) / count(c) + eps / |V|`.
///
/// This mixture is the exact minimizer of label-smoothed cross-entropy for a
/// model with one free categorical per context. `max_len` is set to the
/// longest training sequence.
pub fn train_smoothed(
    sequences: &[Vec<TokenId>],
    order: usize,
    smoothing: SmoothingConfig,
    vocab: Vocab,
) -> Result<ToyModel, ModelError> {
    if sequences.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let max_len = sequences.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let mut model = ToyModel::uniform(vocab, order, max_len)?;
    let v = model.vocab.len();
    let eos = model.vocab.eos;
    let mut counts: BTreeMap<Vec<TokenId>, Vec<u64>> = BTreeMap::new();
    for (i, seq) in sequences.iter().enumerate() {
        if seq.last() != Some(&eos) {
            return Err(ModelError::MissingEos(i));
        }
        if let Some(pos) = seq[..seq.len() - 1].iter().position(|&t| t == eos) {
            return Err(ModelError::EosNotFinal(pos));
        }
        if let Some(&bad) = seq.iter().find(|&&t| t >= v) {
            return Err(ModelError::Invalid(format!("token id {bad} out of range")));
        }
        for t in 0..seq.len() {
            let key = model.context_key(&seq[..t]);
            counts.entry(key).or_insert_with(|| vec![0; v])[seq[t]] += 1;
        }
    }
    let eps = smoothing.epsilon;
    let floor = eps / v as f64;
    for (key, row) in counts {
        let total: u64 = row.iter().sum();
        let probs = row
            .iter()
            .map(|&c| (1.0 - eps) * (c as f64 / total as f64) + floor)
            .collect();
        model.rows.insert(key, probs);
    }
    Ok(model)
}

/// A model with a random row for every reachable context. Each row is
/// `u_t^sharpness` normalized, `u_t` uniform in (0, 1]; larger `sharpness`
/// gives peakier rows. The empty prefix never ends, so every sequence has
/// at least one token.
pub fn random_model(
    vocab: Vocab,
    order: usize,
    max_len: usize,
    sharpness: f64,
    rng: &mut impl RngCore,
) -> Result<ToyModel, ModelError> {
    let mut model = ToyModel::uniform(vocab, order, max_len)?;
    let v = model.vocab.len();
    let eos = model.vocab.eos;
    let tokens: Vec<TokenId> = (0..v).filter(|&t| t != eos).collect();
    let mut contexts: Vec<Vec<TokenId>> = Vec::new();
    for pad in (0..=order).rev() {
        let mut level: Vec<Vec<TokenId>> = vec![vec![BEGIN; pad]];
        for _ in pad..order {
            level = level
                .into_iter()
                .flat_map(|c| {
                    tokens.iter().map(move |&t| {
                        let mut c = c.clone();
                        c.push(t);
                        c
                    })
                })
                .collect();
        }
        contexts.extend(level);
    }
    for key in contexts {
        let mut raw: Vec<f64> = (0..v)
            .map(|_| (1.0 - uniform01(rng)).powf(sharpness))
            .collect();
        if key.iter().all(|&t| t == BEGIN) {
            raw[eos] = 0.0;
        }
        let total: f64 = raw.iter().sum();
        model
            .rows
            .insert(key, raw.iter().map(|x| x / total).collect());
    }
    Ok(model)
}

/// Every end-of-sequence-terminated sequence of length at most `max_len`
/// with its log-probability, best first. Equal scores are ordered by token
/// ids lexicographically.
pub fn enumerate_all(
    model: &ToyModel,
    max_len: usize,
) -> Result<Vec<(Vec<TokenId>, f64)>, ModelError> {
    enumerate_all_with_budget(model, max_len, DEFAULT_ENUMERATION_BUDGET)
}

pub fn enumerate_all_with_budget(
    model: &ToyModel,
    max_len: usize,
    budget: u64,
) -> Result<Vec<(Vec<TokenId>, f64)>, ModelError> {
    let v = model.vocab.len();
    let over = u32::try_from(max_len)
        .ok()
        .and_then(|l| (v as u64).checked_pow(l))
        .is_none_or(|n| n > budget);
    if over {
        return Err(ModelError::BudgetExceeded {
            vocab: v,
            max_len,
            budget,
        });
    }
    let eos = model.vocab.eos;
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((prefix, lp)) = stack.pop() {
        let row = model.row_for(&prefix);
        for (tok, &p) in row.iter().enumerate() {
            let next_lp = if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                lp + p.ln()
            };
            let mut seq = prefix.clone();
            seq.push(tok);
            if tok == eos {
                out.push((seq, next_lp));
            } else if seq.len() < max_len {
                stack.push((seq, next_lp));
            }
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Index and value of the largest entry, ties to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> (TokenId, f64) {
    let mut best = (0, row[0]);
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}
