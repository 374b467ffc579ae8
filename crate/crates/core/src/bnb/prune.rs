//! Relaxation-free depth-first search for small `k`: items in index order,
//! `x_j = 1` before `x_j = 0`, pruning only on cardinality and capacity.

use std::time::Instant;

use crate::heuristics::{Incumbent, Source};
use crate::instance::Instance;

/// Exhaustive search; returns the better of `incumbent` and the best
/// feasible point found, or `None` if neither exists.
pub fn branch_and_prune(inst: &Instance, incumbent: Option<&Incumbent>) -> Option<Incumbent> {
    branch_and_prune_until(inst, incumbent, None).0
}

/// As [`branch_and_prune`], giving up at `deadline`. The flag is `true` when
/// the search completed.
pub fn branch_and_prune_until(
    inst: &Instance,
    incumbent: Option<&Incumbent>,
    deadline: Option<Instant>,
) -> (Option<Incumbent>, bool) {
    let n = inst.n();
    let k = inst.k();
    if k > n {
        return (incumbent.cloned(), true);
    }
    let mut search = Search {
        inst,
        lightest: lightest_suffix_sums(inst),
        x: vec![false; n],
        w: vec![0; n],
        best: incumbent.map(|i| i.value),
        found: None,
        visited: 0,
        deadline,
        timed_out: false,
    };
    search.dfs(0, k, 0, inst.offset());
    let complete = !search.timed_out;
    let out = match search.found {
        Some(x) => Some(Incumbent::new(inst, x, Source::BranchLeaf)),
        None => incumbent.cloned(),
    };
    (out, complete)
}

/// `table[j][r]`: sum of the `r` lightest weights among items `j..n`, for
/// `r ≤ min(k, n − j)`.
fn lightest_suffix_sums(inst: &Instance) -> Vec<Vec<i64>> {
    let (n, k) = (inst.n(), inst.k());
    let mut table = vec![vec![0]; n + 1];
    let mut sorted: Vec<i64> = Vec::with_capacity(n);
    for j in (0..n).rev() {
        let w = inst.weight(j);
        let pos = sorted.partition_point(|&v| v <= w);
        sorted.insert(pos, w);
        let mut sums = Vec::with_capacity(k.min(sorted.len()) + 1);
        let mut acc = 0;
        sums.push(0);
        for &v in sorted.iter().take(k) {
            acc += v;
            sums.push(acc);
        }
        table[j] = sums;
    }
    table
}

struct Search<'a> {
    inst: &'a Instance,
    lightest: Vec<Vec<i64>>,
    x: Vec<bool>,
    /// `w_j = Σ_{i chosen} c_ij`
    w: Vec<i64>,
    best: Option<i64>,
    found: Option<Vec<bool>>,
    visited: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl Search<'_> {
    fn dfs(&mut self, j: usize, need: usize, load: i64, value: i64) {
        if self.timed_out {
            return;
        }
        self.visited += 1;
        if self.visited % (1 << 16) == 0 && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out = true;
            return;
        }
        if need == 0 {
            if self.best.map_or(true, |b| value > b) {
                self.best = Some(value);
                self.found = Some(self.x.clone());
            }
            return;
        }
        let n = self.inst.n();
        if n - j < need || load + self.lightest[j][need] > self.inst.capacity() {
            return;
        }
        let a = self.inst.weight(j);
        if load + a <= self.inst.capacity() {
            let gain = self.inst.profit(j, j) + 2 * self.w[j];
            self.toggle(j, true);
            self.dfs(j + 1, need - 1, load + a, value + gain);
            self.toggle(j, false);
        }
        self.dfs(j + 1, need, load, value);
    }

    fn toggle(&mut self, j: usize, on: bool) {
        self.x[j] = on;
        let sign = if on { 1 } else { -1 };
        for (w, &c) in self.w.iter_mut().zip(self.inst.profit_row(j)) {
            *w += sign * c;
        }
    }
}
