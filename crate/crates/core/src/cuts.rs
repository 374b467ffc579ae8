//! Triangle inequalities of the metric polytope.
//!
//! For `i < j < k` each of the four sign patterns gives
//! `s₁X_ij + s₂X_ik + s₃X_jk ≥ −1`, valid for every `X = yyᵗ` with
//! `y ∈ {±1}ⁿ`. We write them as `T(X) ≤ e` with `T_c(X) = −(s₁X_ij + s₂X_ik + s₃X_jk)`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;

/// Default threshold below which a violation is ignored by separation.
pub const VIOLATION_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CutKind {
    /// `+X_ij + X_ik + X_jk ≥ −1`
    Ppp,
    /// `−X_ij − X_ik + X_jk ≥ −1`
    Mmp,
    /// `−X_ij + X_ik − X_jk ≥ −1`
    Mpm,
    /// `+X_ij − X_ik − X_jk ≥ −1`
    Pmm,
}

impl CutKind {
    pub const ALL: [CutKind; 4] = [CutKind::Ppp, CutKind::Mmp, CutKind::Mpm, CutKind::Pmm];

    /// Signs on `(X_ij, X_ik, X_jk)`.
    pub fn signs(self) -> [f64; 3] {
        match self {
            CutKind::Ppp => [1.0, 1.0, 1.0],
            CutKind::Mmp => [-1.0, -1.0, 1.0],
            CutKind::Mpm => [-1.0, 1.0, -1.0],
            CutKind::Pmm => [1.0, -1.0, -1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TriangleCut {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub kind: CutKind,
}

impl TriangleCut {
    pub fn new(i: usize, j: usize, k: usize, kind: CutKind) -> Self {
        assert!(i < j && j < k, "triangle indices must be increasing");
        TriangleCut { i, j, k, kind }
    }

    fn signed_sum(&self, x: &DMatrix<f64>) -> f64 {
        let [a, b, c] = self.kind.signs();
        a * x[(self.i, self.j)] + b * x[(self.i, self.k)] + c * x[(self.j, self.k)]
    }

    /// `T_c(X)`; the cut holds iff this is at most 1.
    pub fn lhs(&self, x: &DMatrix<f64>) -> f64 {
        -self.signed_sum(x)
    }

    /// `1 − T_c(X)`, negative when violated.
    pub fn slack(&self, x: &DMatrix<f64>) -> f64 {
        1.0 + self.signed_sum(x)
    }

    /// Adds `w` times the gradient of `T_c` (a symmetric matrix with entries
    /// `∓1/2` at the three off-diagonal pairs).
    pub fn add_gradient(&self, w: f64, out: &mut DMatrix<f64>) {
        let [a, b, c] = self.kind.signs();
        for (p, q, s) in [(self.i, self.j, a), (self.i, self.k, b), (self.j, self.k, c)] {
            let v = -0.5 * s * w;
            out[(p, q)] += v;
            out[(q, p)] += v;
        }
    }
}

/// Active subset of triangle inequalities with their multipliers.
#[derive(Debug, Clone, Default)]
pub struct CutPool {
    cuts: Vec<TriangleCut>,
    gamma: Vec<f64>,
    members: HashSet<TriangleCut>,
    capacity: usize,
}

impl CutPool {
    pub fn new(capacity: usize) -> Self {
        CutPool {
            capacity,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn cuts(&self) -> &[TriangleCut] {
        &self.cuts
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn contains(&self, cut: &TriangleCut) -> bool {
        self.members.contains(cut)
    }

    /// Replaces all multipliers; negative entries are clipped to zero.
    pub fn set_gamma(&mut self, gamma: &[f64]) {
        assert_eq!(gamma.len(), self.cuts.len());
        self.gamma.iter_mut().zip(gamma).for_each(|(g, &v)| *g = v.max(0.0));
    }

    /// Adds cuts with multiplier zero, skipping duplicates. Returns how many
    /// were added.
    pub fn add(&mut self, cuts: impl IntoIterator<Item = TriangleCut>) -> usize {
        let mut added = 0;
        for cut in cuts {
            if self.members.insert(cut) {
                self.cuts.push(cut);
                self.gamma.push(0.0);
                added += 1;
            }
        }
        added
    }

    /// Removes cuts whose multiplier is below `threshold`. Returns the removed
    /// positions (in the order before removal).
    pub fn remove_below(&mut self, threshold: f64) -> Vec<usize> {
        let keep: Vec<bool> = self.gamma.iter().map(|&g| g >= threshold).collect();
        self.retain_positions(&keep);
        (0..keep.len()).filter(|&p| !keep[p]).collect()
    }

    /// Drops lowest-multiplier cuts (ties: oldest first) until the pool fits
    /// its capacity. Returns the removed positions.
    pub fn enforce_capacity(&mut self) -> Vec<usize> {
        if self.cuts.len() <= self.capacity {
            return Vec::new();
        }
        let excess = self.cuts.len() - self.capacity;
        let mut order: Vec<usize> = (0..self.cuts.len()).collect();
        order.sort_by(|&p, &q| self.gamma[p].total_cmp(&self.gamma[q]).then(p.cmp(&q)));
        let mut keep = vec![true; self.cuts.len()];
        for &p in &order[..excess] {
            keep[p] = false;
        }
        self.retain_positions(&keep);
        let mut removed: Vec<usize> = order[..excess].to_vec();
        removed.sort_unstable();
        removed
    }

    fn retain_positions(&mut self, keep: &[bool]) {
        let mut p = 0;
        self.cuts.retain(|_| {
            p += 1;
            keep[p - 1]
        });
        let mut p = 0;
        self.gamma.retain(|_| {
            p += 1;
            keep[p - 1]
        });
        self.members = self.cuts.iter().copied().collect();
    }
}

/// `e − T(X)` over the pool; negative entries are violated cuts.
pub fn evaluate(pool: &CutPool, x: &DMatrix<f64>) -> Vec<f64> {
    pool.cuts.iter().map(|c| c.slack(x)).collect()
}

/// `T(X)` over an explicit list of cuts.
pub fn apply(cuts: &[TriangleCut], x: &DMatrix<f64>) -> Vec<f64> {
    cuts.iter().map(|c| c.lhs(x)).collect()
}

/// `Tᵗ(γ) = Σ_c γ_c ∇T_c`, symmetric with zero diagonal.
pub fn adjoint_apply(cuts: &[TriangleCut], gamma: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(cuts.len(), gamma.len());
    let mut out = DMatrix::zeros(n, n);
    for (c, &g) in cuts.iter().zip(gamma) {
        if g != 0.0 {
            c.add_gradient(g, &mut out);
        }
    }
    out
}

/// Every triangle inequality with its violation `−(1 − T_c(X))`, unsorted.
pub fn all_violations(x: &DMatrix<f64>) -> Vec<(TriangleCut, f64)> {
    let n = x.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let xij = x[(i, j)];
            for k in (j + 1)..n {
                let (xik, xjk) = (x[(i, k)], x[(j, k)]);
                let sums = [xij + xik + xjk, -xij - xik + xjk, -xij + xik - xjk, xij - xik - xjk];
                for (kind, s) in CutKind::ALL.into_iter().zip(sums) {
                    out.push((TriangleCut { i, j, k, kind }, -(1.0 + s)));
                }
            }
        }
    }
    out
}

/// Up to `m` most violated inequalities not already in `exclude`, by
/// decreasing violation; ties by `(i, j, k, kind)`.
pub fn separate(x: &DMatrix<f64>, m: usize, tol: f64, exclude: Option<&CutPool>) -> Vec<TriangleCut> {
    let n = x.nrows();
    let mut found: Vec<(TriangleCut, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let xij = x[(i, j)];
            for k in (j + 1)..n {
                let (xik, xjk) = (x[(i, k)], x[(j, k)]);
                let sums = [xij + xik + xjk, -xij - xik + xjk, -xij + xik - xjk, xij - xik - xjk];
                for (kind, s) in CutKind::ALL.into_iter().zip(sums) {
                    let viol = -(1.0 + s);
                    if viol > tol {
                        let cut = TriangleCut { i, j, k, kind };
                        if exclude.map_or(true, |p| !p.contains(&cut)) {
                            found.push((cut, viol));
                        }
                    }
                }
            }
        }
    }
    found.sort_by(|(ca, va), (cb, vb)| vb.total_cmp(va).then(ca.cmp(cb)));
    found.truncate(m);
    found.into_iter().map(|(c, _)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_pool(n: usize) -> CutPool {
        let mut pool = CutPool::new(usize::MAX);
        pool.add(all_violations(&DMatrix::identity(n, n)).into_iter().map(|(c, _)| c));
        pool
    }

    fn all_minus_one(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -1.0 })
    }

    #[test]
    fn identity_violates_nothing() {
        let pool = full_pool(5);
        assert_eq!(pool.len(), 4 * 10);
        assert!(evaluate(&pool, &DMatrix::identity(5, 5)).iter().all(|&v| v == 1.0));
        assert!(separate(&DMatrix::identity(5, 5), 10, VIOLATION_TOL, None).is_empty());
    }

    #[test]
    fn all_minus_one_violates_each_ppp() {
        let x = all_minus_one(4);
        let pool = full_pool(4);
        let viol: Vec<_> = evaluate(&pool, &x)
            .into_iter()
            .zip(pool.cuts())
            .filter(|(v, _)| *v < 0.0)
            .collect();
        assert_eq!(viol.len(), 4);
        assert!(viol.iter().all(|(v, c)| c.kind == CutKind::Ppp && (*v + 2.0).abs() < 1e-15));

        let sep = separate(&x, 2, VIOLATION_TOL, None);
        assert_eq!(sep.len(), 2);
        assert!(sep.iter().all(|c| c.kind == CutKind::Ppp));
        assert_eq!((sep[0].i, sep[0].j, sep[0].k), (0, 1, 2));
    }

    #[test]
    fn cuts_hold_on_all_sign_vectors() {
        for n in 3..=8 {
            let pool = full_pool(n);
            for mask in 0u32..(1 << n) {
                let y = nalgebra::DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
                let x = &y * y.transpose();
                assert!(evaluate(&pool, &x).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 7;
        let pool = full_pool(n);
        for _ in 0..20 {
            let gamma: Vec<f64> = (0..pool.len()).map(|_| rng.gen::<f64>()).collect();
            let mut x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            x = (&x + x.transpose()) * 0.5;
            let lhs = adjoint_apply(pool.cuts(), &gamma, n).dot(&x);
            let rhs: f64 = apply(pool.cuts(), &x).iter().zip(&gamma).map(|(t, g)| t * g).sum();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }
        let zero = adjoint_apply(pool.cuts(), &vec![0.0; pool.len()], n);
        assert_eq!(zero.amax(), 0.0);
    }

    #[test]
    fn single_cut_gradient_shape() {
        let cut = TriangleCut::new(0, 2, 3, CutKind::Mpm);
        let m = adjoint_apply(&[cut], &[1.0], 5);
        let nz: Vec<_> = m.iter().filter(|v| **v != 0.0).collect();
        assert_eq!(nz.len(), 6);
        assert!(nz.iter().all(|v| v.abs() == 0.5));
        assert_eq!(m, m.transpose());
        assert!(m.diagonal().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn separation_is_prefix_of_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 9;
        let mut x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        x = (&x + x.transpose()) * 0.5;
        x.fill_diagonal(1.0);
        let mut all: Vec<_> = all_violations(&x).into_iter().filter(|(_, v)| *v > VIOLATION_TOL).collect();
        all.sort_by(|(ca, va), (cb, vb)| vb.total_cmp(va).then(ca.cmp(cb)));
        let sep = separate(&x, 15, VIOLATION_TOL, None);
        let prefix: Vec<_> = all.iter().take(15).map(|(c, _)| *c).collect();
        assert_eq!(sep, prefix);

        let mut pool = CutPool::new(100);
        pool.add(sep[..5].iter().copied());
        let rest = separate(&x, 10, VIOLATION_TOL, Some(&pool));
        assert_eq!(rest, prefix[5..15]);
    }

    #[test]
    fn pool_bookkeeping() {
        let mut pool = CutPool::new(3);
        let cuts: Vec<_> = CutKind::ALL.iter().map(|&k| TriangleCut::new(0, 1, 2, k)).collect();
        assert_eq!(pool.add(cuts.iter().copied()), 4);
        assert_eq!(pool.add(cuts.iter().copied()), 0);
        pool.set_gamma(&[0.5, 1e-7, -3.0, 2.0]);
        assert_eq!(pool.gamma(), &[0.5, 1e-7, 0.0, 2.0]);
        assert_eq!(pool.enforce_capacity(), vec![2]);
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.remove_below(1e-5), vec![1]);
        assert_eq!(pool.cuts(), &[cuts[0], cuts[3]]);
        assert!(!pool.contains(&cuts[1]));
        assert_eq!(pool.add([cuts[1]]), 1);
    }
}
