//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's metric or decoding code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};

/// Tiny deterministic generator (SplitMix64) so oracles and instance
/// generators do not share the library's RNG.
#[derive(Clone)]
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in [lo, hi].
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Random string of `len` tokens drawn from the first `vocab` letters.
    pub fn tokens(&mut self, len: usize, vocab: usize) -> String {
        (0..len)
            .map(|_| ((b'a' + self.int(0, vocab - 1) as u8) as char).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

// ---------------------------------------------------------------- 13a

fn is_13a_symbol(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | ' '..='&' | '('..='+' | ':'..='@' | '/')
}

/// Apply a two-character rewrite left to right without overlapping, the
/// way a leftmost regex substitution over a fixed two-char pattern does.
fn rewrite_pairs(
    chars: &[char],
    hit: impl Fn(char, char) -> bool,
    emit: impl Fn(char, char, &mut Vec<char>),
) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len() * 2);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && hit(chars[i], chars[i + 1]) {
            emit(chars[i], chars[i + 1], &mut out);
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Character-scanning 13a tokenizer.
pub fn tokenize_13a(text: &str) -> Vec<String> {
    let mut line = text
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if line.contains('&') {
        for (from, to) in [
            ("&quot;", "\""),
            ("&amp;", "&"),
            ("&lt;", "<"),
            ("&gt;", ">"),
        ] {
            line = line.replace(from, to);
        }
    }
    let mut chars: Vec<char> = Vec::new();
    for c in format!(" {line} ").chars() {
        if is_13a_symbol(c) {
            chars.extend([' ', c, ' ']);
        } else {
            chars.push(c);
        }
    }
    let digit = |c: char| c.is_ascii_digit();
    let pc = |c: char| c == '.' || c == ',';
    let chars = rewrite_pairs(
        &chars,
        |a, b| !digit(a) && pc(b),
        |a, b, o| o.extend([a, ' ', b, ' ']),
    );
    let chars = rewrite_pairs(
        &chars,
        |a, b| pc(a) && !digit(b),
        |a, b, o| o.extend([' ', a, ' ', b]),
    );
    let chars = rewrite_pairs(
        &chars,
        |a, b| digit(a) && b == '-',
        |a, b, o| o.extend([a, ' ', b, ' ']),
    );
    let s: String = chars.into_iter().collect();
    s.split_whitespace().map(str::to_string).collect()
}

// ---------------------------------------------------------------- BLEU

/// (matches, totals, hyp_len, ref_len)
pub type BleuCounts = ([u64; 4], [u64; 4], u64, u64);

fn grams(tokens: &[String], n: usize) -> BTreeMap<Vec<String>, u64> {
    let mut m = BTreeMap::new();
    for i in 0..tokens.len().saturating_sub(n - 1) {
        if i + n <= tokens.len() {
            *m.entry(tokens[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

pub fn bleu_counts(hyp: &str, reference: &str) -> BleuCounts {
    let h = tokenize_13a(hyp);
    let r = tokenize_13a(reference);
    let mut matches = [0; 4];
    let mut totals = [0; 4];
    for n in 1..=4 {
        let hg = grams(&h, n);
        let rg = grams(&r, n);
        totals[n - 1] = hg.values().sum();
        matches[n - 1] = hg
            .iter()
            .map(|(g, c)| (*c).min(*rg.get(g).unwrap_or(&0)))
            .sum();
    }
    (matches, totals, h.len() as u64, r.len() as u64)
}

fn bp(hyp_len: u64, ref_len: u64) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Exp-smoothed sentence BLEU over the orders the hypothesis has.
pub fn sentence_bleu(hyp: &str, reference: &str) -> f64 {
    let (m, t, hl, rl) = bleu_counts(hyp, reference);
    if hl == 0 {
        return 0.0;
    }
    let mut precisions = Vec::new();
    let mut denominator = 1.0;
    for n in 0..4 {
        if t[n] == 0 {
            continue;
        }
        if m[n] > 0 {
            precisions.push(m[n] as f64 / t[n] as f64);
        } else {
            denominator *= 2.0;
            precisions.push(1.0 / (denominator * t[n] as f64));
        }
    }
    let geo = precisions
        .iter()
        .product::<f64>()
        .powf(1.0 / precisions.len() as f64);
    100.0 * bp(hl, rl) * geo
}

pub fn corpus_bleu(pairs: &[(String, String)]) -> f64 {
    let mut m = [0u64; 4];
    let mut t = [0u64; 4];
    let (mut hl, mut rl) = (0, 0);
    for (h, r) in pairs {
        let c = bleu_counts(h, r);
        for n in 0..4 {
            m[n] += c.0[n];
            t[n] += c.1[n];
        }
        hl += c.2;
        rl += c.3;
    }
    corpus_bleu_from_counts(&(m, t, hl, rl))
}

/// Unsmoothed BLEU of summed counts.
pub fn corpus_bleu_from_counts(&(m, t, hl, rl): &BleuCounts) -> f64 {
    if (0..4).any(|n| m[n] == 0 || t[n] == 0) {
        return 0.0;
    }
    let geo = (0..4)
        .map(|n| m[n] as f64 / t[n] as f64)
        .product::<f64>()
        .powf(0.25);
    100.0 * bp(hl, rl) * geo
}

// ---------------------------------------------------------------- chrF

/// Per order (hyp n-grams, ref n-grams, clipped matches), n = 1..=6.
pub fn chrf_counts(hyp: &str, reference: &str) -> Vec<(u64, u64, u64)> {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    (1..=6)
        .map(|n| {
            let count = |s: &[char]| {
                let mut m: BTreeMap<String, u64> = BTreeMap::new();
                if s.len() >= n {
                    for i in 0..=s.len() - n {
                        *m.entry(s[i..i + n].iter().collect()).or_insert(0) += 1;
                    }
                }
                m
            };
            let (hc, rc) = (count(&h), count(&r));
            let matched = hc
                .iter()
                .map(|(g, c)| (*c).min(*rc.get(g).unwrap_or(&0)))
                .sum();
            (hc.values().sum(), rc.values().sum(), matched)
        })
        .collect()
}

pub fn chrf_from_counts(counts: &[(u64, u64, u64)]) -> f64 {
    let f: Vec<f64> = counts
        .iter()
        .filter(|(h, r, _)| *h > 0 && *r > 0)
        .map(|&(h, r, m)| {
            if m == 0 {
                0.0
            } else {
                let (p, rec) = (m as f64 / h as f64, m as f64 / r as f64);
                5.0 * p * rec / (4.0 * p + rec)
            }
        })
        .collect();
    if f.is_empty() {
        0.0
    } else {
        100.0 * f.iter().sum::<f64>() / f.len() as f64
    }
}

pub fn sentence_chrf(hyp: &str, reference: &str) -> f64 {
    chrf_from_counts(&chrf_counts(hyp, reference))
}

// ---------------------------------------------------------------- MBR

pub fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite")
}

/// Naive double-loop expected-utility argmax in exact rational arithmetic.
/// `utility(i, j)` scores hypothesis i against pseudo-reference j.
/// Without the diagonal, one sample of the hypothesis itself is removed
/// unless it is the only sample.
pub fn mbr_oracle(
    counts: &[u32],
    refs: &[usize],
    include_diagonal: bool,
    utility: impl Fn(usize, usize) -> f64,
) -> usize {
    let mut best: Option<(usize, BigRational)> = None;
    for i in 0..counts.len() {
        let mut num = BigRational::zero();
        let mut den = BigInt::zero();
        let total: u32 = refs.iter().map(|&j| counts[j]).sum();
        for &j in refs {
            let mut m = counts[j];
            if !include_diagonal && j == i && total > 1 {
                m -= 1;
            }
            num += rational(utility(i, j)) * BigRational::from_integer(BigInt::from(m));
            den += BigInt::from(m);
        }
        let eu = num / BigRational::from_integer(den);
        if best.as_ref().is_none_or(|(_, b)| eu > *b) {
            best = Some((i, eu));
        }
    }
    best.expect("nonempty").0
}

// ---------------------------------------------------------------- MERT

/// Argmax of `a_i + g * b_i`, ties to the lowest index.
pub fn naive_owner(lines: &[(f64, f64)], g: f64) -> usize {
    let mut best = 0;
    for i in 1..lines.len() {
        if lines[i].0 + g * lines[i].1 > lines[best].0 + g * lines[best].1 {
            best = i;
        }
    }
    best
}

/// Best objective over a `steps x steps` grid on [-1, 1]^2, with
/// `objective(w0, w1)` evaluated from scratch.
pub fn grid_best(steps: usize, objective: impl Fn(f64, f64) -> f64) -> f64 {
    let at = |k: usize| -1.0 + 2.0 * k as f64 / (steps - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..steps {
        for j in 0..steps {
            best = best.max(objective(at(i), at(j)));
        }
    }
    best
}

/// Upper chi-square quantiles at significance 0.001, by degrees of freedom.
pub const CHI2_CRIT_0_001: [f64; 10] = [
    10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877, 29.588,
];

pub fn chi_square(observed: &[u64], expected_prob: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(expected_prob)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}
