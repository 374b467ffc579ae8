//! Problem data for the 0-1 k-item quadratic knapsack problem.
//!
//! An [`Instance`] holds `max xᵗCx  s.t.  aᵗx ≤ b, eᵗx = k, x ∈ {0,1}ⁿ` together
//! with an integer `offset` that accumulates the objective contribution of
//! variables fixed to one while branching.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("profit matrix is not symmetric at ({i}, {j}): {cij} != {cji}")]
    NonSymmetric { i: usize, j: usize, cij: i64, cji: i64 },
    #[error("asymmetric pair ({i}, {j}) has an odd sum and cannot be averaged to integers")]
    OddAsymmetry { i: usize, j: usize },
    #[error("negative data: {0}")]
    NegativeData(String),
    #[error("capacity {b} outside [max weight {max_a}, total weight {total} - 1]")]
    CapacityOutOfRange { b: i64, max_a: i64, total: i64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cannot fix item {j} to one: {reason}")]
    InfeasibleFix { j: usize, reason: &'static str },
    #[error("item index {j} out of range for n = {n}")]
    IndexOutOfRange { j: usize, n: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// How to treat an asymmetric profit matrix during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetry {
    #[default]
    Reject,
    /// Replace `C` by `(C + Cᵗ)/2`. Pairs with an odd sum are still rejected.
    Average,
}

/// Unvalidated instance data as read from a file or built by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInstance {
    pub k: i64,
    pub b: i64,
    pub a: Vec<i64>,
    pub c: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    n: usize,
    k: usize,
    a: Vec<i64>,
    b: i64,
    /// Row-major n×n profits.
    c: Vec<i64>,
    offset: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Solvable,
    /// `k = 1`: the optimum is the best single item that fits.
    TrivialK1 { value: i64, index: usize },
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Preprocessed {
    pub k_max: usize,
    pub b_prime: i64,
    pub status: Status,
}

/// Root-level validation: nonnegativity, symmetry and `max aⱼ ≤ b < Σ aⱼ`.
pub fn validate(raw: RawInstance, symmetry: Symmetry) -> Result<Instance, InstanceError> {
    let inst = validate_subproblem(raw, symmetry)?;
    let max_a = inst.a.iter().copied().max().unwrap_or(0);
    let total: i64 = inst.a.iter().sum();
    if inst.n == 0 || max_a > inst.b || inst.b >= total {
        return Err(InstanceError::CapacityOutOfRange {
            b: inst.b,
            max_a,
            total,
        });
    }
    Ok(inst)
}

/// Subproblem-level validation: only shape, nonnegativity and symmetry.
pub fn validate_subproblem(raw: RawInstance, symmetry: Symmetry) -> Result<Instance, InstanceError> {
    let n = raw.a.len();
    if raw.c.len() != n {
        return Err(InstanceError::Dimension(format!(
            "{} weights but {} profit rows",
            n,
            raw.c.len()
        )));
    }
    if let Some((i, row)) = raw.c.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(InstanceError::Dimension(format!(
            "profit row {} has {} entries, expected {}",
            i,
            row.len(),
            n
        )));
    }
    if raw.k < 0 {
        return Err(InstanceError::NegativeData(format!("k = {}", raw.k)));
    }
    if raw.b < 0 {
        return Err(InstanceError::NegativeData(format!("b = {}", raw.b)));
    }
    if let Some((j, &w)) = raw.a.iter().enumerate().find(|(_, &w)| w < 0) {
        return Err(InstanceError::NegativeData(format!("a[{j}] = {w}")));
    }
    let mut c: Vec<i64> = raw.c.into_iter().flatten().collect();
    if let Some(p) = c.iter().position(|&v| v < 0) {
        return Err(InstanceError::NegativeData(format!(
            "c[{}][{}] = {}",
            p / n,
            p % n,
            c[p]
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (cij, cji) = (c[i * n + j], c[j * n + i]);
            if cij == cji {
                continue;
            }
            match symmetry {
                Symmetry::Reject => return Err(InstanceError::NonSymmetric { i, j, cij, cji }),
                Symmetry::Average => {
                    let sum = cij + cji;
                    if sum % 2 != 0 {
                        return Err(InstanceError::OddAsymmetry { i, j });
                    }
                    c[i * n + j] = sum / 2;
                    c[j * n + i] = sum / 2;
                }
            }
        }
    }
    Ok(Instance {
        n,
        k: raw.k as usize,
        a: raw.a,
        b: raw.b,
        c,
        offset: 0,
    })
}

impl Instance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[i64] {
        &self.a
    }

    pub fn weight(&self, j: usize) -> i64 {
        self.a[j]
    }

    pub fn capacity(&self) -> i64 {
        self.b
    }

    #[inline]
    pub fn profit(&self, i: usize, j: usize) -> i64 {
        self.c[i * self.n + j]
    }

    /// Row `i` of the profit matrix.
    pub fn profit_row(&self, i: usize) -> &[i64] {
        &self.c[i * self.n..(i + 1) * self.n]
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            k: self.k as i64,
            b: self.b,
            a: self.a.clone(),
            c: self.c.chunks(self.n.max(1)).take(self.n).map(<[i64]>::to_vec).collect(),
        }
    }

    /// `xᵗCx` over the items of this instance, excluding `offset`.
    pub fn objective(&self, x: &[bool]) -> i64 {
        debug_assert_eq!(x.len(), self.n);
        let chosen: Vec<usize> = (0..self.n).filter(|&j| x[j]).collect();
        chosen
            .iter()
            .map(|&i| chosen.iter().map(|&j| self.profit(i, j)).sum::<i64>())
            .sum()
    }

    /// Objective in the units of the root problem: `xᵗCx + offset`.
    pub fn total_value(&self, x: &[bool]) -> i64 {
        self.objective(x) + self.offset
    }

    pub fn load(&self, x: &[bool]) -> i64 {
        x.iter().zip(&self.a).filter(|(&s, _)| s).map(|(_, &w)| w).sum()
    }

    pub fn is_feasible(&self, x: &[bool]) -> bool {
        x.len() == self.n && x.iter().filter(|&&s| s).count() == self.k && self.load(x) <= self.b
    }

    /// Indices sorted by weight, ties by index.
    pub fn items_by_weight(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by_key(|&j| (self.a[j], j));
        idx
    }

    /// Removes item `j` with `x_j = value`. Fixing to one moves `c_jj` into the
    /// offset and folds the interaction terms `2 c_ij` into the diagonal,
    /// which is exact on binary points since `x_i² = x_i`.
    pub fn fix_variable(&self, j: usize, value: bool) -> Result<Instance, InstanceError> {
        if j >= self.n {
            return Err(InstanceError::IndexOutOfRange { j, n: self.n });
        }
        if value {
            if self.k == 0 {
                return Err(InstanceError::InfeasibleFix { j, reason: "k is already zero" });
            }
            if self.a[j] > self.b {
                return Err(InstanceError::InfeasibleFix { j, reason: "weight exceeds capacity" });
            }
        }
        let keep: Vec<usize> = (0..self.n).filter(|&i| i != j).collect();
        let m = keep.len();
        let mut c = Vec::with_capacity(m * m);
        for &i in &keep {
            for &l in &keep {
                c.push(self.profit(i, l));
            }
        }
        let a = keep.iter().map(|&i| self.a[i]).collect();
        let mut out = Instance {
            n: m,
            k: self.k,
            a,
            b: self.b,
            c,
            offset: self.offset,
        };
        if value {
            out.k -= 1;
            out.b -= self.a[j];
            out.offset += self.profit(j, j);
            for (r, &i) in keep.iter().enumerate() {
                out.c[r * m + r] += 2 * self.profit(i, j);
            }
        }
        Ok(out)
    }

    /// Copy with one extra item of weight `b + 1` and zero profits. It can never
    /// be selected, so the optimum is unchanged.
    pub fn with_blocker_item(&self) -> Instance {
        let m = self.n + 1;
        let mut c = vec![0; m * m];
        for i in 0..self.n {
            c[i * m..i * m + self.n].copy_from_slice(self.profit_row(i));
        }
        let mut a = self.a.clone();
        a.push(self.b + 1);
        Instance {
            n: m,
            k: self.k,
            a,
            b: self.b,
            c,
            offset: self.offset,
        }
    }

    /// Reorders items: item `i` of the result is item `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Instance {
        assert_eq!(perm.len(), self.n);
        let n = self.n;
        let mut c = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = self.profit(perm[i], perm[j]);
            }
        }
        Instance {
            n,
            k: self.k,
            a: perm.iter().map(|&p| self.a[p]).collect(),
            b: self.b,
            c,
            offset: self.offset,
        }
    }

    /// Sub-instance on `items` (in that order); the others are fixed to zero.
    pub fn restricted(&self, items: &[usize]) -> Instance {
        let m = items.len();
        let mut c = Vec::with_capacity(m * m);
        for &i in items {
            c.extend(items.iter().map(|&j| self.profit(i, j)));
        }
        Instance {
            n: m,
            k: self.k,
            a: items.iter().map(|&j| self.a[j]).collect(),
            b: self.b,
            c,
            offset: self.offset,
        }
    }

    pub fn with_capacity(&self, b: i64) -> Instance {
        Instance { b, ..self.clone() }
    }

    pub fn with_k(&self, k: usize) -> Instance {
        Instance { k, ..self.clone() }
    }

    /// Serializes to the plain-text instance format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n, self.k, self.b);
        let _ = writeln!(s, "{}", join(&self.a));
        for i in 0..self.n {
            let _ = writeln!(s, "{}", join(self.profit_row(i)));
        }
        s
    }
}

fn join(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

/// Largest `m` such that the `m` lightest weights fit into `b`, and the sum of
/// the `k` lightest weights.
pub fn preprocess(inst: &Instance) -> Preprocessed {
    let mut sorted = inst.a.clone();
    sorted.sort_unstable();
    let mut k_max = 0;
    let mut acc = 0;
    for &w in &sorted {
        if acc + w > inst.b {
            break;
        }
        acc += w;
        k_max += 1;
    }
    let b_prime = sorted.iter().take(inst.k).sum();
    let status = if inst.k > k_max {
        Status::Infeasible
    } else if inst.k == 1 {
        // k = 1 with capacity: best diagonal among items that fit.
        let best = (0..inst.n)
            .filter(|&j| inst.a[j] <= inst.b)
            .map(|j| (inst.profit(j, j), j))
            .max_by_key(|&(v, j)| (v, std::cmp::Reverse(j)))
            .expect("k_max >= 1 implies an item fits");
        Status::TrivialK1 {
            value: best.0,
            index: best.1,
        }
    } else {
        Status::Solvable
    };
    Preprocessed {
        k_max,
        b_prime,
        status,
    }
}

/// Parses the text format: `n k b`, then `n` weights, then `n` rows of `C`.
/// Lines beginning with `#` and blank lines are skipped; errors report the
/// physical line number.
pub fn parse_instance(text: &str) -> Result<RawInstance, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let ints = |line: usize, l: &str| -> Result<Vec<i64>, ParseError> {
        l.split_whitespace()
            .map(|t| {
                t.parse::<i64>().map_err(|_| ParseError {
                    line,
                    message: format!("expected an integer, found {t:?}"),
                })
            })
            .collect()
    };

    let (line, header) = lines.next().ok_or(ParseError {
        line: 1,
        message: "missing header `n k b`".into(),
    })?;
    let h = ints(line, header)?;
    if h.len() != 3 {
        return Err(ParseError {
            line,
            message: format!("header needs 3 integers `n k b`, found {}", h.len()),
        });
    }
    if h[0] < 0 {
        return Err(ParseError {
            line,
            message: "n must be nonnegative".into(),
        });
    }
    let n = h[0] as usize;
    let last = line;
    let (line, wl) = lines.next().ok_or(ParseError {
        line: last + 1,
        message: "missing weight line".into(),
    })?;
    let a = ints(line, wl)?;
    if a.len() != n {
        return Err(ParseError {
            line,
            message: format!("expected {n} weights, found {}", a.len()),
        });
    }
    let mut c = Vec::with_capacity(n);
    let mut last = line;
    for r in 0..n {
        let (line, rl) = lines.next().ok_or(ParseError {
            line: last + 1,
            message: format!("missing profit row {}", r + 1),
        })?;
        let row = ints(line, rl)?;
        if row.len() != n {
            return Err(ParseError {
                line,
                message: format!("expected {n} profits, found {}", row.len()),
            });
        }
        c.push(row);
        last = line;
    }
    if let Some((line, _)) = lines.next() {
        return Err(ParseError {
            line,
            message: "unexpected trailing data".into(),
        });
    }
    Ok(RawInstance {
        k: h[1],
        b: h[2],
        a,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(k: i64, b: i64, a: &[i64], c: &[&[i64]]) -> RawInstance {
        RawInstance {
            k,
            b,
            a: a.to_vec(),
            c: c.iter().map(|r| r.to_vec()).collect(),
        }
    }

    fn diag(a: &[i64], b: i64, k: i64) -> Instance {
        let n = a.len();
        let c: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1 } else { 0 }).collect())
            .collect();
        validate_subproblem(
            RawInstance {
                k,
                b,
                a: a.to_vec(),
                c,
            },
            Symmetry::Reject,
        )
        .unwrap()
    }

    #[test]
    fn minimal_instance_is_valid() {
        let inst = validate(raw(1, 1, &[1, 1], &[&[1, 0], &[0, 2]]), Symmetry::Reject).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.offset(), 0);
    }

    #[test]
    fn asymmetric_is_rejected() {
        let err = validate(raw(1, 1, &[1, 1], &[&[1, 2], &[3, 1]]), Symmetry::Reject).unwrap_err();
        assert!(matches!(err, InstanceError::NonSymmetric { i: 0, j: 1, .. }));
        let err = validate(raw(1, 1, &[1, 1], &[&[1, 2], &[3, 1]]), Symmetry::Average).unwrap_err();
        assert_eq!(err, InstanceError::OddAsymmetry { i: 0, j: 1 });
        let ok = validate(raw(1, 1, &[1, 1], &[&[1, 2], &[4, 1]]), Symmetry::Average).unwrap();
        assert_eq!(ok.profit(0, 1), 3);
        assert_eq!(ok.profit(1, 0), 3);
    }

    #[test]
    fn capacity_at_total_weight_is_out_of_range() {
        let err = validate(raw(1, 5, &[2, 3], &[&[0, 0], &[0, 0]]), Symmetry::Reject).unwrap_err();
        assert!(matches!(err, InstanceError::CapacityOutOfRange { b: 5, .. }));
        let err = validate(raw(1, 2, &[2, 3], &[&[0, 0], &[0, 0]]), Symmetry::Reject).unwrap_err();
        assert!(matches!(err, InstanceError::CapacityOutOfRange { .. }));
    }

    #[test]
    fn negative_data_is_rejected() {
        let err = validate(raw(1, 1, &[1, -1], &[&[0, 0], &[0, 0]]), Symmetry::Reject).unwrap_err();
        assert!(matches!(err, InstanceError::NegativeData(_)));
        let err = validate(raw(1, 1, &[1, 1], &[&[0, -1], &[-1, 0]]), Symmetry::Reject).unwrap_err();
        assert!(matches!(err, InstanceError::NegativeData(_)));
    }

    #[test]
    fn k_max_and_b_prime() {
        let p = preprocess(&diag(&[2, 3, 4, 5], 8, 2));
        assert_eq!(p.k_max, 2);
        assert_eq!(p.status, Status::Solvable);
        let p = preprocess(&diag(&[2, 3, 4, 5, 6], 8, 2));
        assert_eq!(p.b_prime, 5);
        let p = preprocess(&diag(&[2, 3, 4, 5], 8, 3));
        assert_eq!(p.status, Status::Infeasible);
    }

    #[test]
    fn k_one_is_trivial() {
        let inst = validate(raw(1, 1, &[1, 1], &[&[1, 0], &[0, 2]]), Symmetry::Reject).unwrap();
        assert_eq!(
            preprocess(&inst).status,
            Status::TrivialK1 { value: 2, index: 1 }
        );
        // capacity-aware scan in subproblems
        let sub = validate_subproblem(raw(1, 1, &[1, 2], &[&[1, 0], &[0, 9]]), Symmetry::Reject).unwrap();
        assert_eq!(
            preprocess(&sub).status,
            Status::TrivialK1 { value: 1, index: 0 }
        );
    }

    #[test]
    fn fix_to_one_folds_interactions_into_diagonal() {
        let inst = validate_subproblem(raw(2, 2, &[1, 1], &[&[1, 2], &[2, 3]]), Symmetry::Reject).unwrap();
        let red = inst.fix_variable(0, true).unwrap();
        assert_eq!(red.n(), 1);
        assert_eq!(red.profit(0, 0), 7);
        assert_eq!(red.offset(), 1);
        assert_eq!(red.k(), 1);
        assert_eq!(red.capacity(), 1);
    }

    #[test]
    fn fix_to_zero_deletes() {
        let inst = validate_subproblem(raw(1, 2, &[1, 1], &[&[1, 2], &[2, 3]]), Symmetry::Reject).unwrap();
        let red = inst.fix_variable(1, false).unwrap();
        assert_eq!(red.to_raw(), raw(1, 2, &[1], &[&[1]]));
        assert_eq!(red.total_value(&[true]), inst.total_value(&[true, false]));
    }

    #[test]
    fn infeasible_fix() {
        let inst = diag(&[1, 5], 3, 1);
        assert!(matches!(
            inst.fix_variable(1, true),
            Err(InstanceError::InfeasibleFix { j: 1, .. })
        ));
        let inst = diag(&[1, 1], 3, 0);
        assert!(inst.fix_variable(0, true).is_err());
        assert!(matches!(
            inst.fix_variable(7, false),
            Err(InstanceError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let inst = validate(raw(2, 5, &[2, 3, 4], &[&[1, 2, 3], &[2, 4, 5], &[3, 5, 6]]), Symmetry::Reject).unwrap();
        let text = format!("# comment\n{}", inst.to_text());
        assert_eq!(parse_instance(&text).unwrap(), inst.to_raw());
    }

    #[test]
    fn parse_errors_cite_physical_line() {
        let err = parse_instance("2 1 1\n1 x\n1 0\n0 2\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_instance("2 1 1\n1 1 1\n1 0\n0 2\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_instance("# c\n2 1 1\n1 1\n1 0\n").unwrap_err();
        assert_eq!(err.line, 5);
        let err = parse_instance("2 1 1\n1 1\n1 0\n0 2\n9\n").unwrap_err();
        assert_eq!(err.line, 5);
    }
}
