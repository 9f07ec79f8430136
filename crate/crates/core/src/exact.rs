//! Exact floating-point summation.
//!
//! Partials are kept non-overlapping (Shewchuk's algorithm, as in Python's
//! `math.fsum`), so the represented value is the exact real sum of every
//! term added. Rankers use it to make expected-utility comparisons
//! independent of summation order.

use std::cmp::Ordering;

#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        debug_assert!(x.is_finite());
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Add `a * b` without rounding the product.
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        if e != 0.0 {
            self.add(e);
        }
    }

    /// The exact sum scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> ExactSum {
        let mut out = ExactSum::new();
        for &p in &self.partials {
            out.add_product(p, factor);
        }
        out
    }

    /// Sign of the exact sum.
    pub fn signum(&self) -> Ordering {
        // The largest-magnitude partial dominates all the others combined.
        match self.partials.iter().rev().find(|p| **p != 0.0) {
            Some(p) if *p > 0.0 => Ordering::Greater,
            Some(_) => Ordering::Less,
            None => Ordering::Equal,
        }
    }

    /// The exact sum rounded to the nearest double.
    pub fn value(&self) -> f64 {
        let partials = &self.partials;
        let mut n = partials.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            let y = partials[n - 1];
            n -= 1;
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

/// Compare `a / da` with `b / db` exactly, for positive denominators.
pub fn cmp_ratios(a: &ExactSum, da: f64, b: &ExactSum, db: f64) -> Ordering {
    let mut diff = a.scaled(db);
    for &p in &b.scaled(da).partials {
        diff.add(-p);
    }
    diff.signum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(xs: &[f64]) -> ExactSum {
        let mut s = ExactSum::new();
        for &x in xs {
            s.add(x);
        }
        s
    }

    #[test]
    fn cancellation() {
        let s = sum(&[1e100, 1.0, -1e100, 1e-30]);
        assert_eq!(s.value(), 1.0 + 1e-30);
        assert_eq!(sum(&[0.1; 10]).value(), 1.0);
    }

    #[test]
    fn order_independent() {
        let xs = [0.1, 0.7, 1e-17, 3.3, -2.2, 1e16, -1e16];
        let mut rev = xs;
        rev.reverse();
        assert_eq!(sum(&xs).value(), sum(&rev).value());
    }

    #[test]
    fn products_are_exact() {
        let mut a = ExactSum::new();
        a.add_product(3.0, 0.1);
        assert_eq!(a.value(), sum(&[0.1, 0.1, 0.1]).value());
        let b = sum(&[0.1, 0.1, 0.1]);
        assert_eq!(cmp_ratios(&a, 1.0, &b, 1.0), Ordering::Equal);
    }

    #[test]
    fn ratio_comparison() {
        let a = sum(&[1.0]);
        let b = sum(&[2.0]);
        assert_eq!(cmp_ratios(&a, 3.0, &b, 6.0), Ordering::Equal);
        assert_eq!(cmp_ratios(&a, 3.0, &b, 7.0), Ordering::Greater);
        assert_eq!(sum(&[]).signum(), Ordering::Equal);
        assert_eq!(sum(&[-1e-300]).signum(), Ordering::Less);
    }
}
