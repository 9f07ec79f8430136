//! Candidate generation: beam search, ancestral sampling and nucleus
//! sampling over a [`ToyModel`].
//!
//! Every sequence occupies at most `max_len` positions including the
//! end-of-sequence token. Beam search only keeps hypotheses that terminate
//! in time. Samplers never draw at the last position: a sequence that
//! reaches it is finalized with end-of-sequence and flagged as truncated.
//!
//! Random numbers come from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)` and switched to stream `segment_id`. A uniform
//! variate is `(next_u64() >> 11) * 2^-53`; a categorical draw walks the
//! cumulative mass and takes the first token whose running sum exceeds
//! `u * mass`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{dedup_candidates, Candidate, NBestEntry, SourceSegment};
use crate::toy_model::{argmax, TokenId, ToyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Beam,
    Ancestral,
    Nucleus,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beam" => Ok(Method::Beam),
            "ancestral" | "sampling" => Ok(Method::Ancestral),
            "nucleus" => Ok(Method::Nucleus),
            other => Err(format!("unknown generation method {other:?}")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Beam => "beam",
            Method::Ancestral => "ancestral",
            Method::Nucleus => "nucleus",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub method: Method,
    pub beam_size: usize,
    pub num_samples: usize,
    pub nucleus_p: f64,
    pub max_len: usize,
    pub length_penalty: f64,
    pub seed: u64,
    /// Merge identical samples into multiplicity counts.
    pub dedup: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            method: Method::Beam,
            beam_size: 5,
            num_samples: 200,
            nucleus_p: 0.6,
            max_len: 20,
            length_penalty: 0.0,
            seed: 0,
            dedup: false,
        }
    }
}

impl GenConfig {
    pub fn beam(beam_size: usize, max_len: usize) -> Self {
        GenConfig {
            method: Method::Beam,
            beam_size,
            max_len,
            ..Default::default()
        }
    }

    pub fn ancestral(num_samples: usize, max_len: usize, seed: u64) -> Self {
        GenConfig {
            method: Method::Ancestral,
            num_samples,
            max_len,
            seed,
            ..Default::default()
        }
    }

    pub fn nucleus(num_samples: usize, nucleus_p: f64, max_len: usize, seed: u64) -> Self {
        GenConfig {
            method: Method::Nucleus,
            num_samples,
            nucleus_p,
            max_len,
            seed,
            ..Default::default()
        }
    }
}

/// A generated sequence. `tokens` ends with end-of-sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    /// Ranking score: `logprob / len^length_penalty`.
    pub score: f64,
    pub multiplicity: u32,
    pub truncated: bool,
}

fn length_normalized(logprob: f64, len: usize, length_penalty: f64) -> f64 {
    if length_penalty == 0.0 {
        logprob
    } else {
        logprob / (len as f64).powf(length_penalty)
    }
}

/// Length-synchronous beam search.
///
/// Each step expands every live hypothesis by every token with nonzero
/// probability and keeps the best `width` expansions, where `width` starts
/// at `beam_size` and shrinks by one for every hypothesis that finishes.
/// Equal scores rank by token id, then by the parent's position in the
/// beam. With `beam_size = 1` this is greedy decoding.
pub fn beam_search(model: &ToyModel, cfg: &GenConfig) -> Vec<Hypothesis> {
    assert!(cfg.beam_size >= 1, "beam_size must be positive");
    let eos = model.vocab().eos();
    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut width = cfg.beam_size;
    let mut last_live = Vec::new();

    for step in 0..cfg.max_len {
        if live.is_empty() || width == 0 {
            break;
        }
        let final_position = step + 1 == cfg.max_len;
        // (score, token, parent rank, logprob)
        let mut expansions: Vec<(f64, TokenId, usize, f64)> = Vec::new();
        for (rank, (prefix, lp)) in live.iter().enumerate() {
            let row = model.row_for(prefix);
            for (tok, &p) in row.iter().enumerate() {
                if p == 0.0 || (final_position && tok != eos) {
                    continue;
                }
                let next_lp = lp + p.ln();
                expansions.push((
                    length_normalized(next_lp, step + 1, cfg.length_penalty),
                    tok,
                    rank,
                    next_lp,
                ));
            }
        }
        expansions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        expansions.truncate(width);

        let mut next_live = Vec::new();
        for (score, tok, rank, lp) in expansions {
            let mut tokens = live[rank].0.clone();
            tokens.push(tok);
            if tok == eos {
                finished.push(Hypothesis {
                    tokens,
                    logprob: lp,
                    score,
                    multiplicity: 1,
                    truncated: false,
                });
                width -= 1;
            } else {
                next_live.push((tokens, lp));
            }
        }
        last_live = std::mem::replace(&mut live, next_live);
    }

    if finished.is_empty() {
        // Nothing could terminate within max_len: return the surviving
        // prefixes, finalized and flagged.
        let pool = if live.is_empty() { last_live } else { live };
        finished = pool
            .into_iter()
            .take(cfg.beam_size)
            .map(|(mut tokens, lp)| {
                tokens.push(eos);
                let score = length_normalized(lp, tokens.len(), cfg.length_penalty);
                Hypothesis {
                    tokens,
                    logprob: lp,
                    score,
                    multiplicity: 1,
                    truncated: true,
                }
            })
            .collect();
    }
    finished.sort_by(|a, b| b.score.total_cmp(&a.score));
    finished
}

/// Greedy argmax decoding with end-of-sequence forced at the last position.
pub fn greedy(model: &ToyModel, max_len: usize) -> Hypothesis {
    let eos = model.vocab().eos();
    let mut tokens = Vec::new();
    let mut lp = 0.0;
    let mut truncated = false;
    while tokens.last() != Some(&eos) {
        let row = model.row_for(&tokens);
        let tok = if tokens.len() + 1 == max_len {
            truncated = argmax(row).0 != eos;
            eos
        } else {
            argmax(row).0
        };
        lp += row[tok].ln();
        tokens.push(tok);
    }
    Hypothesis {
        tokens,
        logprob: lp,
        score: lp,
        multiplicity: 1,
        truncated,
    }
}

/// Generator for segment `stream` of a run seeded with `seed`.
pub fn segment_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draw from `(token, weight)` pairs proportionally to the weights.
fn draw(rng: &mut impl RngCore, support: &[(TokenId, f64)]) -> TokenId {
    let mass: f64 = support.iter().map(|(_, w)| w).sum();
    let target = uniform01(rng) * mass;
    let mut cum = 0.0;
    for &(tok, w) in support {
        cum += w;
        if target < cum {
            return tok;
        }
    }
    support
        .iter()
        .rev()
        .find(|(_, w)| *w > 0.0)
        .map(|(t, _)| *t)
        .expect("distribution has positive mass")
}

/// Smallest prefix of the descending-sorted distribution (ties by token id)
/// whose cumulative probability reaches `p`, renormalized. The token that
/// crosses the threshold is included; `p = 1` keeps the whole support.
pub fn nucleus(row: &[f64], p: f64) -> Vec<(TokenId, f64)> {
    assert!(p > 0.0 && p <= 1.0, "nucleus_p must lie in (0, 1]");
    let mut sorted: Vec<(TokenId, f64)> = row
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, q)| *q > 0.0)
        .collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut cum = 0.0;
    let mut keep = sorted.len();
    for (i, &(_, q)) in sorted.iter().enumerate() {
        cum += q;
        if cum >= p {
            keep = i + 1;
            break;
        }
    }
    sorted.truncate(keep);
    let mass: f64 = sorted.iter().map(|(_, q)| q).sum();
    sorted.into_iter().map(|(t, q)| (t, q / mass)).collect()
}

fn sample_one(model: &ToyModel, cfg: &GenConfig, rng: &mut impl RngCore) -> Hypothesis {
    let eos = model.vocab().eos();
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut lp = 0.0;
    let mut truncated = false;
    while tokens.last() != Some(&eos) {
        let row = model.row_for(&tokens);
        let tok = if tokens.len() + 1 >= cfg.max_len {
            truncated = true;
            eos
        } else {
            match cfg.method {
                Method::Nucleus => draw(rng, &nucleus(row, cfg.nucleus_p)),
                _ => {
                    let support: Vec<(TokenId, f64)> = row.iter().copied().enumerate().collect();
                    draw(rng, &support)
                }
            }
        };
        lp += row[tok].ln();
        tokens.push(tok);
    }
    Hypothesis {
        tokens,
        logprob: lp,
        score: lp,
        multiplicity: 1,
        truncated,
    }
}

fn merge_samples(samples: Vec<Hypothesis>) -> Vec<Hypothesis> {
    let mut out: Vec<Hypothesis> = Vec::new();
    let mut index: std::collections::HashMap<Vec<TokenId>, usize> =
        std::collections::HashMap::new();
    for s in samples {
        match index.get(&s.tokens) {
            Some(&i) => out[i].multiplicity += s.multiplicity,
            None => {
                index.insert(s.tokens.clone(), out.len());
                out.push(s);
            }
        }
    }
    out
}

/// `num_samples` independent draws using the supplied generator.
pub fn sample_with_rng(
    model: &ToyModel,
    cfg: &GenConfig,
    rng: &mut impl RngCore,
) -> Vec<Hypothesis> {
    assert!(cfg.num_samples >= 1, "num_samples must be positive");
    let samples: Vec<Hypothesis> = (0..cfg.num_samples)
        .map(|_| sample_one(model, cfg, rng))
        .collect();
    if cfg.dedup {
        merge_samples(samples)
    } else {
        samples
    }
}

/// Ancestral sampling from the full model distribution (stream 0).
pub fn ancestral_sample(model: &ToyModel, cfg: &GenConfig) -> Vec<Hypothesis> {
    let cfg = GenConfig {
        method: Method::Ancestral,
        ..cfg.clone()
    };
    sample_with_rng(model, &cfg, &mut segment_rng(cfg.seed, 0))
}

/// Nucleus (top-p) sampling (stream 0).
pub fn nucleus_sample(model: &ToyModel, cfg: &GenConfig) -> Vec<Hypothesis> {
    let cfg = GenConfig {
        method: Method::Nucleus,
        ..cfg.clone()
    };
    sample_with_rng(model, &cfg, &mut segment_rng(cfg.seed, 0))
}

/// Run the configured method for one segment, using stream `segment_id`.
pub fn generate(model: &ToyModel, cfg: &GenConfig, segment_id: u64) -> Vec<Hypothesis> {
    match cfg.method {
        Method::Beam => beam_search(model, cfg),
        Method::Ancestral | Method::Nucleus => {
            sample_with_rng(model, cfg, &mut segment_rng(cfg.seed, segment_id))
        }
    }
}

pub fn to_candidate(model: &ToyModel, hyp: &Hypothesis) -> Candidate {
    Candidate {
        text: model.vocab().decode(&hyp.tokens),
        logprob: hyp.logprob.is_finite().then_some(hyp.logprob),
        features: Default::default(),
        multiplicity: hyp.multiplicity,
        truncated: hyp.truncated,
    }
}

/// Generate an N-best entry per segment. Segments are processed in
/// parallel; each one draws from its own stream so the output does not
/// depend on scheduling.
pub fn build_nbest(segments: &[(SourceSegment, ToyModel)], cfg: &GenConfig) -> Vec<NBestEntry> {
    segments
        .par_iter()
        .map(|(segment, model)| {
            let hyps = generate(model, cfg, segment.id);
            let mut candidates: Vec<Candidate> =
                hyps.iter().map(|h| to_candidate(model, h)).collect();
            if cfg.dedup {
                // Distinct token sequences always decode to distinct text,
                // so this only matters for beam output.
                candidates = dedup_candidates(&candidates);
            }
            NBestEntry {
                segment: segment.clone(),
                candidates,
                references: Vec::new(),
            }
        })
        .collect()
}
