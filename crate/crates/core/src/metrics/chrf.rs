//! Character n-gram F-score (chrF, beta = 2, orders 1..=6, whitespace
//! removed before extraction).
//!
//! Per order, precision and recall combine into an F-beta score; the final
//! value is the arithmetic mean of those scores over the orders where both
//! hypothesis and reference have at least one n-gram.

use std::collections::HashMap;
use std::ops::{Add, AddAssign};

pub const CHAR_ORDER: usize = 6;
pub const BETA: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChrfStats {
    pub hyp_counts: [u64; CHAR_ORDER],
    pub ref_counts: [u64; CHAR_ORDER],
    pub matches: [u64; CHAR_ORDER],
}

impl AddAssign for ChrfStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..CHAR_ORDER {
            self.hyp_counts[n] += rhs.hyp_counts[n];
            self.ref_counts[n] += rhs.ref_counts[n];
            self.matches[n] += rhs.matches[n];
        }
    }
}

impl Add for ChrfStats {
    type Output = ChrfStats;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl std::iter::Sum for ChrfStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ChrfStats::default(), |a, b| a + b)
    }
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for gram in chars.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

pub fn chrf_stats(hyp: &str, reference: &str) -> ChrfStats {
    let hyp: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let reference: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let mut stats = ChrfStats::default();
    for n in 1..=CHAR_ORDER {
        let h = char_ngrams(&hyp, n);
        let r = char_ngrams(&reference, n);
        stats.hyp_counts[n - 1] = h.values().sum();
        stats.ref_counts[n - 1] = r.values().sum();
        stats.matches[n - 1] = h
            .iter()
            .map(|(gram, &c)| c.min(r.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

/// chrF in [0, 100] from (possibly corpus-summed) statistics.
pub fn chrf_from_stats(stats: &ChrfStats) -> f64 {
    let factor = BETA * BETA;
    let mut sum = 0.0;
    let mut orders = 0;
    for n in 0..CHAR_ORDER {
        let (h, r, m) = (stats.hyp_counts[n], stats.ref_counts[n], stats.matches[n]);
        if h == 0 || r == 0 {
            continue;
        }
        orders += 1;
        if m == 0 {
            continue;
        }
        let precision = m as f64 / h as f64;
        let recall = m as f64 / r as f64;
        sum += (1.0 + factor) * precision * recall / (factor * precision + recall);
    }
    if orders == 0 {
        0.0
    } else {
        100.0 * sum / orders as f64
    }
}

pub fn sentence_chrf(hyp: &str, reference: &str) -> f64 {
    chrf_from_stats(&chrf_stats(hyp, reference))
}
