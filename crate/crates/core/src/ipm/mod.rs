//! Primal-dual predictor-corrector interior-point method for
//!
//! ```text
//! max ⟨C, X⟩   s.t. diag(X) = e, ⟨eeᵗ, X⟩ = (2k−n)², ⟨āāᵗ, X⟩ + s = (b−b′)², X ⪰ 0, s ≥ 0
//! min eᵗy₁..ₙ + (2k−n)² yₙ₊₁ + (b−b′)² yₙ₊₂
//!     s.t. Diag(y₁..ₙ) + yₙ₊₁eeᵗ + yₙ₊₂āāᵗ − Z = C, yₙ₊₂ − t = 0, Z ⪰ 0, t ≥ 0
//! ```
//!
//! The search direction is the HKM one (`ΔX = μZ⁻¹ − X − Z⁻¹ΔZX`,
//! symmetrized); the system matrix is assembled by [`schur::assemble`].
//! The start is dual feasible and primal feasible except for the capacity
//! row, so dual feasibility holds at every iterate up to rounding.

pub mod schur;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;
use thiserror::Error;

use crate::relaxation::RelaxationData;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IpmError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("relaxation is infeasible")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    SlowProgress,
    IterLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct IpmSettings {
    /// Relative duality gap and relative residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
    /// Declare slow progress when the merit drops by less than
    /// `slow_ratio` over `slow_window` iterations.
    pub slow_window: usize,
    pub slow_ratio: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tol: 1e-7,
            max_iter: 100,
            step_fraction: 0.98,
            slow_window: 5,
            slow_ratio: 0.01,
        }
    }
}

impl IpmSettings {
    pub fn with_tol(tol: f64) -> Self {
        IpmSettings {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// `(⟨X,Z⟩ + st) / (1 + |dual_obj|)` in objective units.
    pub gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub primal_step: f64,
    pub dual_step: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    pub s: f64,
    /// `n + 2` multipliers: diagonal, cardinality, capacity.
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub t: f64,
    /// `⟨C, X⟩`, without the relaxation's constant term.
    pub primal_obj: f64,
    /// Dual objective, without the constant term.
    pub dual_obj: f64,
    /// Upper bound on the primal optimum that stays valid under residual dual
    /// infeasibility (see [`solve`]); without the constant term.
    pub safe_bound: f64,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub log: Vec<IterationLog>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConstraintResiduals {
    /// `max |X_ii − 1|`
    pub diag: f64,
    /// `|eᵗXe − (2k−n)²| / (1 + (2k−n)²)`
    pub card: f64,
    /// `max(0, ⟨A,X⟩ − (b−b′)²) / (1 + (b−b′)²)`
    pub cap: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.diag.max(self.card).max(self.cap)
    }
}

impl SdpSolution {
    pub fn residuals(&self, data: &RelaxationData) -> ConstraintResiduals {
        let diag = self.x.diagonal().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        let card = (data.cardinality_lhs(&self.x) - data.rhs_card).abs() / (1.0 + data.rhs_card);
        let cap = (data.capacity_lhs(&self.x) - data.rhs_cap).max(0.0) / (1.0 + data.rhs_cap);
        ConstraintResiduals { diag, card, cap }
    }

    /// Valid upper bound in original objective units.
    pub fn bound(&self, data: &RelaxationData) -> f64 {
        self.safe_bound + data.const_term
    }
}

/// Scaled problem: `E` is normalized by `1/n`, `A` so that `⟨A, I⟩ = n`, and
/// the cost by a constant.
struct Scaled {
    n: usize,
    c: DMatrix<f64>,
    e: DVector<f64>,
    a: Option<DVector<f64>>,
    /// `‖ā‖² / n`, to undo the capacity scaling.
    a_scale: f64,
    rhs: DVector<f64>,
}

impl Scaled {
    fn m(&self) -> usize {
        self.rhs.len()
    }

    fn op(&self, w: &DMatrix<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(self.m());
        for i in 0..n {
            out[i] = w[(i, i)];
        }
        out[n] = (w * &self.e).dot(&self.e);
        if let Some(a) = &self.a {
            out[n + 1] = (w * a).dot(a);
        }
        out
    }

    fn op_adj(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut out = &self.e * self.e.transpose() * y[n];
        if let Some(a) = &self.a {
            out += a * a.transpose() * y[n + 1];
        }
        for i in 0..n {
            out[(i, i)] += y[i];
        }
        out
    }
}

struct Iterate {
    x: DMatrix<f64>,
    s: f64,
    y: DVector<f64>,
    z: DMatrix<f64>,
    t: f64,
}

struct Direction {
    dx: DMatrix<f64>,
    ds: f64,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
    dt: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    rt: f64,
}

/// Solves the relaxation, optionally with `cost_override` in place of `C̄`.
///
/// Besides the usual primal and dual objectives the solution carries
/// `safe_bound = eᵗy + (2k−n)²yₙ₊₁ + (b−b′)²max(yₙ₊₂,0) + n‖R_d‖`, where `R_d`
/// is the dual residual. Since `trace(X) = n` and `0 ≤ ⟨A,X⟩ ≤ (b−b′)²` for
/// every feasible `X`, this bounds the primal optimum at any iterate.
pub fn solve(
    data: &RelaxationData,
    cost_override: Option<&DMatrix<f64>>,
    settings: &IpmSettings,
) -> Result<SdpSolution, IpmError> {
    let n = data.dim;
    let cost = cost_override.unwrap_or(&data.c_bar);
    assert_eq!(cost.nrows(), n, "cost matrix has the wrong order");
    let nf = n as f64;

    if n == 1 || data.rhs_card >= nf * nf {
        return solve_single_point(data, cost);
    }

    let frob = cost.norm();
    let kappa = if frob > 0.0 { frob / nf } else { 1.0 };
    let c = cost / kappa;
    let a_norm2 = data.a_bar.norm_squared();
    let a_total: f64 = data.a_bar.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let has_cap = a_norm2 > 1e-24 * a_total * a_total;
    let a_scale = if has_cap { a_norm2 / nf } else { 1.0 };
    let m = n + 1 + has_cap as usize;
    let mut rhs = DVector::from_element(m, 1.0);
    rhs[n] = data.rhs_card / nf;
    if has_cap {
        rhs[n + 1] = data.rhs_cap / a_scale;
    }
    let p = Scaled {
        n,
        c,
        e: DVector::from_element(n, 1.0 / nf.sqrt()),
        a: has_cap.then(|| &data.a_bar / a_scale.sqrt()),
        a_scale,
        rhs,
    };

    let mut it = starting_point(&p, data.rhs_card);
    let mut log: Vec<IterationLog> = Vec::new();
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut status = SolveStatus::IterLimit;
    let mut steps = (0.0, 0.0);
    let dimension = nf + has_cap as usize as f64;
    let rhs_norm = p.rhs.norm();
    let c_norm = p.c.norm();

    for iteration in 0..=settings.max_iter {
        let res = residuals(&p, &it);
        let pobj = p.c.dot(&it.x);
        let dobj = p.rhs.dot(&it.y);
        let compl = it.x.dot(&it.z) + it.s * it.t;
        let denom = 1.0 + kappa * dobj.abs();
        let rel_gap = kappa * (pobj - dobj).abs() / denom;
        let rel_compl = kappa * compl / denom;
        let pinf = res.rp.norm() / (1.0 + rhs_norm);
        let dinf = (res.rd.norm() + res.rt.abs()) / (1.0 + c_norm);
        log.push(IterationLog {
            iteration,
            primal_obj: kappa * pobj,
            dual_obj: kappa * dobj,
            gap: rel_compl,
            primal_infeas: pinf,
            dual_infeas: dinf,
            primal_step: steps.0,
            dual_step: steps.1,
        });
        if rel_gap.max(rel_compl).max(pinf).max(dinf) <= settings.tol {
            status = SolveStatus::Optimal;
            break;
        }
        history.push((rel_compl.max(rel_gap), pinf.max(settings.tol)));
        if stalled(&history, settings) {
            status = SolveStatus::SlowProgress;
            break;
        }
        if iteration == settings.max_iter {
            break;
        }

        let Some(zchol) = Cholesky::new(it.z.clone()) else {
            return Err(breakdown(iteration, "dual matrix lost definiteness"));
        };
        let Some(xchol) = Cholesky::new(it.x.clone()) else {
            return Err(breakdown(iteration, "primal matrix lost definiteness"));
        };
        let zinv = symmetrize(zchol.inverse());
        let vectors: Vec<&DVector<f64>> = std::iter::once(&p.e).chain(p.a.as_ref()).collect();
        let mut sys = schur::assemble(&zinv, &it.x, &vectors);
        if has_cap {
            sys[(m - 1, m - 1)] += it.s / it.t;
        }
        let sys_chol = match Cholesky::new(sys.clone()) {
            Some(c) => c,
            None => {
                let reg = 1e-13 * sys.trace() / m as f64;
                match Cholesky::new(sys + DMatrix::identity(m, m) * reg) {
                    Some(c) => c,
                    None => {
                        if iteration == 0 {
                            return Err(IpmError::NumericalBreakdown("system matrix is singular".into()));
                        }
                        status = SolveStatus::SlowProgress;
                        break;
                    }
                }
            }
        };

        let mu = compl / dimension;
        let pred = direction(&p, &it, &res, &zinv, &sys_chol, 0.0, None);
        let ap = step_length(&xchol, &pred.dx, it.s, pred.ds, has_cap, settings.step_fraction);
        let ad = step_length(&zchol, &pred.dz, it.t, pred.dt, has_cap, settings.step_fraction);
        let mu_aff = ((&it.x + &pred.dx * ap).dot(&(&it.z + &pred.dz * ad))
            + (it.s + ap * pred.ds) * (it.t + ad * pred.dt))
            / dimension;
        // Short predictor steps mean the iterate is badly centered; lean
        // towards more centering then.
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powf(expon);
        let second = &pred.dz * &pred.dx;
        let corr = direction(
            &p,
            &it,
            &res,
            &zinv,
            &sys_chol,
            sigma * mu,
            Some((&second, pred.ds * pred.dt)),
        );
        let ap = step_length(&xchol, &corr.dx, it.s, corr.ds, has_cap, settings.step_fraction);
        let ad = step_length(&zchol, &corr.dz, it.t, corr.dt, has_cap, settings.step_fraction);
        let ap = confirm_definite(&it.x, &corr.dx, ap);
        let ad = confirm_definite(&it.z, &corr.dz, ad);
        steps = (ap, ad);

        it.x += &corr.dx * ap;
        it.x = symmetrize(std::mem::replace(&mut it.x, DMatrix::zeros(0, 0)));
        it.y += &corr.dy * ad;
        it.z += &corr.dz * ad;
        it.z = symmetrize(std::mem::replace(&mut it.z, DMatrix::zeros(0, 0)));
        if has_cap {
            it.s += ap * corr.ds;
            it.t += ad * corr.dt;
        }
    }

    let res = residuals(&p, &it);
    let last = log.last().expect("at least one iteration is logged");
    let y_cap = if has_cap { it.y[n + 1] } else { 0.0 };
    let safe = kappa
        * (it.y.rows(0, n).sum() + it.y[n] * p.rhs[n] + if has_cap { y_cap.max(0.0) * p.rhs[n + 1] } else { 0.0 }
            + nf * res.rd.norm());

    let mut y = DVector::zeros(n + 2);
    y.rows_mut(0, n).copy_from(&(it.y.rows(0, n) * kappa));
    y[n] = kappa * it.y[n] / nf;
    y[n + 1] = kappa * y_cap / p.a_scale;
    let (s, t) = if has_cap {
        (it.s * p.a_scale, kappa * it.t / p.a_scale)
    } else {
        (data.rhs_cap - data.capacity_lhs(&it.x), 0.0)
    };
    Ok(SdpSolution {
        primal_obj: last.primal_obj,
        dual_obj: last.dual_obj,
        safe_bound: safe,
        rel_gap: (last.primal_obj - last.dual_obj).abs() / (1.0 + last.dual_obj.abs()),
        primal_infeas: last.primal_infeas,
        dual_infeas: last.dual_infeas,
        iterations: last.iteration,
        status,
        x: it.x,
        s,
        y,
        z: it.z * kappa,
        t,
        log,
    })
}

/// Upper bound on the relaxation in original units (including the constant
/// term). Valid at any tolerance.
pub fn bound(data: &RelaxationData, cost_override: Option<&DMatrix<f64>>, tol: f64) -> Result<f64, IpmError> {
    let sol = solve(data, cost_override, &IpmSettings::with_tol(tol))?;
    Ok(sol.bound(data))
}

/// True when neither the best gap nor the best primal infeasibility improved
/// by `slow_ratio` within the last `slow_window` iterations.
fn stalled(history: &[(f64, f64)], settings: &IpmSettings) -> bool {
    let w = settings.slow_window;
    if history.len() <= w {
        return false;
    }
    let (old, recent) = history.split_at(history.len() - w);
    let best = |h: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| h.iter().map(f).fold(f64::INFINITY, f64::min);
    let keep = 1.0 - settings.slow_ratio;
    best(recent, |h| h.0) > keep * best(old, |h| h.0) && best(recent, |h| h.1) > keep * best(old, |h| h.1)
}

fn breakdown(iteration: usize, why: &str) -> IpmError {
    IpmError::NumericalBreakdown(format!("{why} at iteration {iteration}"))
}

/// `k = 0`, `k = n` or `n = 1`: the only feasible matrix is `eeᵗ` (up to sign).
fn solve_single_point(data: &RelaxationData, cost: &DMatrix<f64>) -> Result<SdpSolution, IpmError> {
    let n = data.dim;
    let x = DMatrix::from_element(n, n, 1.0);
    if data.capacity_lhs(&x) > data.rhs_cap * (1.0 + 1e-12) + 1e-9 {
        return Err(IpmError::Infeasible);
    }
    let val = cost.dot(&x);
    Ok(SdpSolution {
        s: data.rhs_cap - data.capacity_lhs(&x),
        y: DVector::zeros(n + 2),
        z: DMatrix::zeros(n, n),
        t: 0.0,
        primal_obj: val,
        dual_obj: val,
        safe_bound: val,
        rel_gap: 0.0,
        primal_infeas: 0.0,
        dual_infeas: 0.0,
        iterations: 0,
        status: SolveStatus::Optimal,
        log: vec![IterationLog {
            iteration: 0,
            primal_obj: val,
            dual_obj: val,
            gap: 0.0,
            primal_infeas: 0.0,
            dual_infeas: 0.0,
            primal_step: 0.0,
            dual_step: 0.0,
        }],
        x,
    })
}

/// `X = (1−ρ)I + ρeeᵗ` meets the diagonal and cardinality rows exactly; `Z` is
/// made diagonally dominant so that `(y, Z)` is dual feasible.
fn starting_point(p: &Scaled, rhs_card: f64) -> Iterate {
    let n = p.n;
    let nf = n as f64;
    let rho = (rhs_card - nf) / (nf * nf - nf);
    let x = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
    let mut y = DVector::zeros(p.m());
    for i in 0..n {
        y[i] = p.c.row(i).iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    }
    let mut z = p.op_adj(&y) - &p.c;
    let (mut s, mut t) = (0.0, 0.0);
    if let Some(a) = &p.a {
        let mu = x.dot(&z) / nf;
        s = (p.rhs[n + 1] - (&x * a).dot(a)).max(1.0);
        t = (mu / s).max(1e-3);
        y[n + 1] = t;
        z += a * a.transpose() * t;
    }
    Iterate { x, s, y, z, t }
}

fn residuals(p: &Scaled, it: &Iterate) -> Residuals {
    let mut rp = &p.rhs - p.op(&it.x);
    if p.a.is_some() {
        rp[p.n + 1] -= it.s;
    }
    let rd = p.op_adj(&it.y) - &it.z - &p.c;
    let rt = if p.a.is_some() { it.y[p.n + 1] - it.t } else { 0.0 };
    Residuals { rp, rd, rt }
}

/// Newton direction for target `mu_t`; `corr` carries the second-order terms
/// `(ΔZ_aff ΔX_aff, Δs_aff Δt_aff)` of the corrector.
fn direction(
    p: &Scaled,
    it: &Iterate,
    res: &Residuals,
    zinv: &DMatrix<f64>,
    sys: &Cholesky<f64, Dyn>,
    mu_t: f64,
    corr: Option<(&DMatrix<f64>, f64)>,
) -> Direction {
    let n = p.n;
    let m = p.m();
    let has_cap = p.a.is_some();
    let (k_mat, k_scalar) = match corr {
        Some((k, ks)) => (Some(k), ks),
        None => (None, 0.0),
    };
    let mut g = &res.rd * &it.x;
    if let Some(k) = k_mat {
        g += k;
    }
    let base = zinv * mu_t - &it.x;
    let w = &base - zinv * g;
    let mut rhs = p.op(&w) - &res.rp;
    if has_cap {
        rhs[m - 1] += (mu_t - it.s * it.t - k_scalar) / it.t - it.s / it.t * res.rt;
    }
    let dy = sys.solve(&rhs);
    let dz = p.op_adj(&dy) + &res.rd;
    let mut g = &dz * &it.x;
    if let Some(k) = k_mat {
        g += k;
    }
    let dx = symmetrize(base - zinv * g);
    let (ds, dt) = if has_cap {
        let dt = dy[n + 1] + res.rt;
        ((mu_t - it.s * it.t - k_scalar) / it.t - it.s / it.t * dt, dt)
    } else {
        (0.0, 0.0)
    };
    Direction { dx, ds, dy, dz, dt }
}

/// Largest step keeping `M + αΔ ≻ 0` (and the scalar positive), times the
/// boundary fraction, capped at one.
fn step_length(chol: &Cholesky<f64, Dyn>, d: &DMatrix<f64>, v: f64, dv: f64, scalar: bool, fraction: f64) -> f64 {
    let l = chol.l();
    let mut alpha = f64::INFINITY;
    if let Some(w) = l.solve_lower_triangular(d) {
        if let Some(w2) = l.solve_lower_triangular(&w.transpose()) {
            let lmin = symmetrize(w2).symmetric_eigenvalues().min();
            if lmin < 0.0 {
                alpha = -1.0 / lmin;
            }
        }
    }
    if scalar && dv < 0.0 {
        alpha = alpha.min(-v / dv);
    }
    (fraction * alpha).min(1.0)
}

/// Backs off until a Cholesky factorization of `M + αΔ` succeeds.
fn confirm_definite(m: &DMatrix<f64>, d: &DMatrix<f64>, mut alpha: f64) -> f64 {
    for _ in 0..30 {
        if Cholesky::new(m + d * alpha).is_some() {
            return alpha;
        }
        alpha *= 0.8;
    }
    0.0
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
