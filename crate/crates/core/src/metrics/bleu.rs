//! BLEU from corpus-decomposable sufficient statistics.
//!
//! Configuration: one reference, mixed case, `13a` tokenization, maximum
//! n-gram order 4. Corpus scores use raw precisions. Sentence scores use
//! exponential smoothing: walking orders 1..=4 and stopping at the first
//! order with no hypothesis n-grams, the k-th order with zero matches gets
//! precision `1 / (2^k * total_n)`. The geometric mean runs over the orders
//! visited, so short segments are not zeroed by orders they cannot have.

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use super::tokenize::tokenize_13a;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SufficientStats {
    /// Clipped n-gram matches for n = 1..=4.
    pub matches: [u64; MAX_ORDER],
    /// Hypothesis n-gram counts for n = 1..=4.
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl Add for SufficientStats {
    type Output = SufficientStats;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for SufficientStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += rhs.matches[n];
            self.totals[n] += rhs.totals[n];
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

impl Sub for SufficientStats {
    type Output = SufficientStats;

    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl SubAssign for SufficientStats {
    fn sub_assign(&mut self, rhs: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] -= rhs.matches[n];
            self.totals[n] -= rhs.totals[n];
        }
        self.hyp_len -= rhs.hyp_len;
        self.ref_len -= rhs.ref_len;
    }
}

impl std::iter::Sum for SufficientStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(SufficientStats::default(), |a, b| a + b)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub(crate) fn stats_from_tokens(hyp: &[String], reference: &[String]) -> SufficientStats {
    let mut stats = SufficientStats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts = ngram_counts(reference, n);
        stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        stats.matches[n - 1] = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

/// Clipped n-gram statistics of `hyp` against `reference` after 13a
/// tokenization.
pub fn bleu_stats(hyp: &str, reference: &str) -> SufficientStats {
    stats_from_tokens(&tokenize_13a(hyp), &tokenize_13a(reference))
}

fn brevity_penalty(stats: &SufficientStats) -> f64 {
    if stats.hyp_len == 0 {
        0.0
    } else if stats.hyp_len < stats.ref_len {
        (1.0 - stats.ref_len as f64 / stats.hyp_len as f64).exp()
    } else {
        1.0
    }
}

/// Unsmoothed BLEU in [0, 100]; zero when any order has no n-grams or no
/// matches.
pub fn corpus_bleu(stats: &SufficientStats) -> f64 {
    if stats.hyp_len == 0 || stats.totals.contains(&0) || stats.matches.contains(&0) {
        return 0.0;
    }
    let log_sum: f64 = (0..MAX_ORDER)
        .map(|n| (stats.matches[n] as f64 / stats.totals[n] as f64).ln())
        .sum();
    100.0 * brevity_penalty(stats) * (log_sum / MAX_ORDER as f64).exp()
}

/// Sentence BLEU with exponential smoothing, from precomputed statistics.
pub fn smoothed_bleu(stats: &SufficientStats) -> f64 {
    if stats.hyp_len == 0 {
        return 0.0;
    }
    let mut smooth = 1.0;
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        let total = stats.totals[n];
        if total == 0 {
            break;
        }
        let precision = if stats.matches[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * total as f64)
        } else {
            stats.matches[n] as f64 / total as f64
        };
        log_sum += precision.ln();
        orders += 1;
    }
    100.0 * brevity_penalty(stats) * (log_sum / orders as f64).exp()
}

pub fn sentence_bleu(hyp: &str, reference: &str) -> f64 {
    smoothed_bleu(&bleu_stats(hyp, reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_stats() {
        let s = bleu_stats("a b c d", "a b c d");
        assert_eq!(s.matches, [4, 3, 2, 1]);
        assert_eq!(s.totals, [4, 3, 2, 1]);
        assert_eq!((s.hyp_len, s.ref_len), (4, 4));
        assert_eq!(corpus_bleu(&s), 100.0);
    }

    #[test]
    fn clipping() {
        let s = bleu_stats("a a a", "a");
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 3);
    }

    #[test]
    fn empty_hypothesis() {
        let s = bleu_stats("", "a");
        assert_eq!(s.matches, [0; 4]);
        assert_eq!(s.totals, [0; 4]);
        assert_eq!((s.hyp_len, s.ref_len), (0, 1));
        assert_eq!(corpus_bleu(&s), 0.0);
        assert_eq!(sentence_bleu("", "a"), 0.0);
    }

    #[test]
    fn closed_form_corpus_value() {
        let s = bleu_stats("a b c d e", "a b c d f");
        let expected = 100.0 * (0.8f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        assert!((corpus_bleu(&s) - expected).abs() < 1e-12);
        assert!((corpus_bleu(&s) - 66.8740).abs() < 1e-4);
    }

    #[test]
    fn brevity_only() {
        let s = bleu_stats("a b c d", "a b c d e f");
        let expected = 100.0 * (1.0f64 - 6.0 / 4.0).exp();
        assert!((corpus_bleu(&s) - expected).abs() < 1e-12);
    }

    #[test]
    fn sentence_identity_and_floor() {
        assert_eq!(sentence_bleu("a b", "a b"), 100.0);
        assert_eq!(
            sentence_bleu("The cat sat on the mat .", "The cat sat on the mat ."),
            100.0
        );
        assert!(sentence_bleu("x y z", "a b c") > 0.0);
        // Disjoint two-token pair: p1 = 1/(2*2), p2 = 1/(4*1).
        let expected = 100.0 * ((0.25f64).ln() * 0.5 + (0.25f64).ln() * 0.5).exp();
        assert!((sentence_bleu("a b", "c d") - expected).abs() < 1e-12);
    }

    #[test]
    fn stats_are_additive() {
        let a = bleu_stats("a b c", "a b d");
        let b = bleu_stats("x y", "x y z");
        let sum = a + b;
        assert_eq!(sum - b, a);
        assert_eq!([a, b].into_iter().sum::<SufficientStats>(), sum);
    }
}
