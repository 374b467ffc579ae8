//! Lower bounds: a greedy construction with swap-based local search, and a
//! variable-fixing variant driven by a fractional point of the relaxation.

use serde::Serialize;
use thiserror::Error;

use crate::instance::{preprocess, Instance, Preprocessed, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    Primal,
    VarFix,
    BranchLeaf,
}

/// A feasible point and its value `xᵗCx + offset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Incumbent {
    pub x: Vec<bool>,
    pub value: i64,
    pub source: Source,
}

impl Incumbent {
    pub fn new(inst: &Instance, x: Vec<bool>, source: Source) -> Self {
        debug_assert!(inst.is_feasible(&x));
        let value = inst.total_value(&x);
        Incumbent { x, value, source }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no feasible subset of {k} items (at most {k_max} fit)")]
pub struct Infeasible {
    pub k: usize,
    pub k_max: usize,
}

/// Thresholds for [`varfix_heuristic`].
pub const EPSILON_SCHEDULE: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Greedy by objective gain per unit weight, then first-improvement swaps.
pub fn primal_heuristic(inst: &Instance, prep: &Preprocessed) -> Result<Incumbent, Infeasible> {
    let (n, k) = (inst.n(), inst.k());
    if matches!(prep.status, Status::Infeasible) || k > n {
        return Err(Infeasible { k, k_max: prep.k_max });
    }
    let mut state = Selection::empty(inst);
    greedy_fill(inst, &mut state);
    if state.count != k {
        // Unreachable when k <= k_max; kept as a repair path.
        state = Selection::from_items(inst, &inst.items_by_weight()[..k]);
    }
    local_search(inst, &mut state);
    Ok(Incumbent::new(inst, state.x, Source::Primal))
}

/// For each threshold `ε`, drops the items with `x_frac < ε`, runs
/// [`primal_heuristic`] on what is left, and polishes the result on the full
/// instance. Stops once fewer than `k` items survive. Returns the best of
/// these and `incumbent`; `None` only if both are absent.
pub fn varfix_heuristic(inst: &Instance, x_frac: &[f64], incumbent: Option<&Incumbent>) -> Option<Incumbent> {
    assert_eq!(x_frac.len(), inst.n());
    let k = inst.k();
    let mut best = incumbent.cloned();
    let mut last: Option<Vec<usize>> = None;
    for eps in EPSILON_SCHEDULE {
        let free: Vec<usize> = (0..inst.n()).filter(|&j| x_frac[j] >= eps).collect();
        if free.len() < k {
            break;
        }
        if last.as_ref() == Some(&free) {
            continue;
        }
        let sub = inst.restricted(&free);
        if let Ok(found) = primal_heuristic(&sub, &preprocess(&sub)) {
            let items: Vec<usize> = free.iter().zip(&found.x).filter(|(_, &v)| v).map(|(&j, _)| j).collect();
            let mut state = Selection::from_items(inst, &items);
            local_search(inst, &mut state);
            let cand = Incumbent::new(inst, state.x, Source::VarFix);
            if best.as_ref().map_or(true, |b| cand.value > b.value) {
                best = Some(cand);
            }
        }
        last = Some(free);
    }
    best
}

/// Chosen set with `w_j = Σ_{i chosen} c_ij` cached for every item.
struct Selection {
    x: Vec<bool>,
    w: Vec<i64>,
    load: i64,
    count: usize,
}

impl Selection {
    fn empty(inst: &Instance) -> Self {
        Selection {
            x: vec![false; inst.n()],
            w: vec![0; inst.n()],
            load: 0,
            count: 0,
        }
    }

    fn from_items(inst: &Instance, items: &[usize]) -> Self {
        let mut s = Selection::empty(inst);
        for &j in items {
            s.add(inst, j);
        }
        s
    }

    fn add(&mut self, inst: &Instance, j: usize) {
        debug_assert!(!self.x[j]);
        self.x[j] = true;
        self.load += inst.weight(j);
        self.count += 1;
        for (w, &c) in self.w.iter_mut().zip(inst.profit_row(j)) {
            *w += c;
        }
    }

    fn swap(&mut self, inst: &Instance, out: usize, inp: usize) {
        self.x[out] = false;
        self.x[inp] = true;
        self.load += inst.weight(inp) - inst.weight(out);
        let (ro, ri) = (inst.profit_row(out), inst.profit_row(inp));
        for (l, w) in self.w.iter_mut().enumerate() {
            *w += ri[l] - ro[l];
        }
    }

    /// Objective increase from adding `j`.
    fn gain(&self, inst: &Instance, j: usize) -> i64 {
        inst.profit(j, j) + 2 * self.w[j]
    }
}

/// Adds items by `gain / weight` (zero weight ranks first) while keeping a
/// completion to `k` items within capacity possible. Ties go to the lowest
/// index.
fn greedy_fill(inst: &Instance, state: &mut Selection) {
    let k = inst.k();
    let by_weight = inst.items_by_weight();
    while state.count < k {
        let need = k - state.count - 1;
        let mut choice: Option<(usize, (bool, f64))> = None;
        for j in 0..inst.n() {
            if state.x[j] || state.load + inst.weight(j) > inst.capacity() {
                continue;
            }
            let rest = lightest_excluding(inst, &by_weight, &state.x, j, need);
            if rest.map_or(true, |r| state.load + inst.weight(j) + r > inst.capacity()) {
                continue;
            }
            let g = state.gain(inst, j) as f64;
            let key = match inst.weight(j) {
                0 => (true, g),
                a => (false, g / a as f64),
            };
            if choice.map_or(true, |(_, best)| key > best) {
                choice = Some((j, key));
            }
        }
        match choice {
            Some((j, _)) => state.add(inst, j),
            None => return,
        }
    }
}

/// Sum of the `need` lightest unselected items other than `skip`.
fn lightest_excluding(inst: &Instance, by_weight: &[usize], x: &[bool], skip: usize, need: usize) -> Option<i64> {
    let picked: Vec<i64> = by_weight
        .iter()
        .filter(|&&i| !x[i] && i != skip)
        .take(need)
        .map(|&i| inst.weight(i))
        .collect();
    (picked.len() == need).then(|| picked.iter().sum())
}

/// First-improvement 1-out/1-in swaps in index order until none improves,
/// filling up first if the set is short.
fn local_search(inst: &Instance, state: &mut Selection) {
    let n = inst.n();
    loop {
        greedy_fill(inst, state);
        let mut improved = false;
        'scan: for i in 0..n {
            if !state.x[i] {
                continue;
            }
            for j in 0..n {
                if state.x[j] || state.load - inst.weight(i) + inst.weight(j) > inst.capacity() {
                    continue;
                }
                let delta = inst.profit(j, j) + 2 * state.w[j] - 2 * inst.profit(i, j) - 2 * state.w[i]
                    + inst.profit(i, i);
                if delta > 0 {
                    state.swap(inst, i, j);
                    improved = true;
                    break 'scan;
                }
            }
        }
        if !improved {
            return;
        }
    }
}
