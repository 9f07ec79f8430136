//! Upper envelope of a set of lines `a_i + gamma * b_i`.

/// Partition of the real line into intervals, each owned by the line that
/// is maximal on it. `owners[k]` owns `(breakpoints[k-1], breakpoints[k])`,
/// with the first and last intervals unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub breakpoints: Vec<f64>,
    pub owners: Vec<usize>,
}

impl Envelope {
    /// Owner of the interval containing `gamma`. Exactly at a breakpoint
    /// both neighbours attain the maximum and the lower index wins.
    pub fn owner_at(&self, gamma: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b < gamma);
        if k < self.breakpoints.len() && self.breakpoints[k] == gamma {
            self.owners[k].min(self.owners[k + 1])
        } else {
            self.owners[k]
        }
    }
}

/// Sorted-slope hull sweep, O(m log m). Among parallel lines only the
/// highest intercept survives; exact duplicates resolve to the lowest index.
pub fn upper_envelope(lines: &[(f64, f64)]) -> Envelope {
    assert!(!lines.is_empty(), "upper_envelope needs at least one line");
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&i, &j| {
        let (ai, bi) = lines[i];
        let (aj, bj) = lines[j];
        bi.total_cmp(&bj).then(aj.total_cmp(&ai)).then(i.cmp(&j))
    });
    order.dedup_by(|later, earlier| lines[*later].1 == lines[*earlier].1);

    // (line index, left end of the interval it owns)
    let mut hull: Vec<(usize, f64)> = Vec::with_capacity(order.len());
    for &i in &order {
        let (a, b) = lines[i];
        loop {
            match hull.last() {
                None => {
                    hull.push((i, f64::NEG_INFINITY));
                    break;
                }
                Some(&(top, start)) => {
                    let (ta, tb) = lines[top];
                    let cross = (ta - a) / (b - tb);
                    if cross <= start {
                        hull.pop();
                    } else {
                        hull.push((i, cross));
                        break;
                    }
                }
            }
        }
    }
    Envelope {
        breakpoints: hull.iter().skip(1).map(|&(_, x)| x).collect(),
        owners: hull.iter().map(|&(i, _)| i).collect(),
    }
}
