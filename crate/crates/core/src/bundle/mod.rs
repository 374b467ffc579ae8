//! Proximal bundle method for the Lagrangian dual over triangle inequalities:
//!
//! ```text
//! f(γ) = eᵗγ + max_{X feasible} ⟨C̄ − Tᵗ(γ), X⟩ + const,   γ ≥ 0.
//! ```
//!
//! Every `f(γ)` is an upper bound on the integer optimum. The oracle value is
//! the interior-point method's safe bound, so it stays valid when the inner
//! solve stops early.
//!
//! Bundle elements keep the maximizer `X_i` rather than a fixed subgradient:
//! `f(γ) ≥ ⟨C̄, X_i⟩ + const + (e − T(X_i))ᵗγ` holds for every `γ`, so the
//! linearizations can be rebuilt cheaply whenever the cut pool changes.

pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cuts::{self, CutPool};
use crate::ipm::{self, IpmError, IpmSettings};
use crate::relaxation::RelaxationData;

#[derive(Debug, Clone, Serialize)]
pub struct BundleSettings {
    /// Stop tolerance handed to the interior-point method.
    pub ipm_tol: f64,
    /// Oracle evaluations allowed, including `f(0)`.
    pub max_evals: usize,
    /// Descent parameter `m_L`.
    pub descent_ratio: f64,
    pub initial_weight: f64,
    /// Bundle size; older elements are merged into one aggregate.
    pub max_bundle: usize,
    /// Cuts whose multiplier is below this are dropped at pool updates.
    pub gamma_drop: f64,
    /// Pool update every this many descent steps.
    pub update_period: usize,
    /// New cuts per update; `None` means `min(5n, 300)`.
    pub cuts_per_update: Option<usize>,
    /// Pool capacity as a multiple of the matrix order.
    pub pool_factor: usize,
    /// Stop when the predicted decrease falls below this (relative).
    pub stall_tol: f64,
    /// `false` evaluates `f(0)` only, which is the plain SDP bound.
    pub use_cuts: bool,
}

impl Default for BundleSettings {
    fn default() -> Self {
        BundleSettings {
            ipm_tol: 1e-5,
            max_evals: 30,
            descent_ratio: 0.1,
            initial_weight: 1.0,
            max_bundle: 25,
            gamma_drop: 1e-5,
            update_period: 5,
            cuts_per_update: None,
            pool_factor: 10,
            stall_tol: 1e-5,
            use_cuts: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    /// The bound dropped below `lower_bound + 1`.
    Prune,
    /// Predicted decrease negligible and no new violated cuts.
    Stall,
    Budget,
    /// Cuts disabled.
    SdpOnly,
    /// A later oracle call failed; the best earlier value is returned.
    OracleFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepKind {
    Initial,
    Descent,
    Null,
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleEvent {
    pub eval: usize,
    pub f: f64,
    pub cuts: usize,
    pub kind: StepKind,
}

#[derive(Debug, Clone)]
pub struct OracleValue {
    /// `f(γ)` in original objective units.
    pub f: f64,
    /// `e − T(X*)` over the pool.
    pub g: Vec<f64>,
    pub x: DMatrix<f64>,
}

/// One evaluation of `f` at `gamma` (aligned with `pool`).
pub fn oracle_eval(pool: &CutPool, gamma: &[f64], relax: &RelaxationData, ipm_tol: f64) -> Result<OracleValue, IpmError> {
    assert!(gamma.iter().all(|&v| v >= 0.0), "multipliers must be nonnegative");
    let cost = &relax.c_bar - cuts::adjoint_apply(pool.cuts(), gamma, relax.dim);
    let sol = ipm::solve(relax, Some(&cost), &IpmSettings::with_tol(ipm_tol))?;
    let f = sol.bound(relax) + gamma.iter().sum::<f64>();
    let g = cuts::evaluate(pool, &sol.x);
    Ok(OracleValue { f, g, x: sol.x })
}

#[derive(Debug, Clone)]
pub struct BundleOutcome {
    /// Smallest `f` evaluated: a valid upper bound.
    pub bound: f64,
    /// `f(0)`, the bound without cuts.
    pub sdp_bound: f64,
    /// Maximizer belonging to `bound`.
    pub x: DMatrix<f64>,
    pub pool: CutPool,
    pub evals: usize,
    pub termination: Termination,
    pub trace: Vec<BundleEvent>,
    /// Every `f` value computed, in order.
    pub values: Vec<f64>,
}

struct Element {
    x: DMatrix<f64>,
    alpha: f64,
}

/// Minimizes `f` from `γ = 0`, stopping early once the bound proves that
/// nothing better than `lower_bound` exists.
pub fn minimize(relax: &RelaxationData, lower_bound: f64, settings: &BundleSettings) -> Result<BundleOutcome, IpmError> {
    let n = relax.dim;
    let mut pool = CutPool::new(settings.pool_factor * n);
    let first = oracle_eval(&pool, &[], relax, settings.ipm_tol)?;
    let mut out = BundleOutcome {
        bound: first.f,
        sdp_bound: first.f,
        x: first.x.clone(),
        pool: CutPool::new(0),
        evals: 1,
        termination: Termination::SdpOnly,
        trace: vec![BundleEvent {
            eval: 1,
            f: first.f,
            cuts: 0,
            kind: StepKind::Initial,
        }],
        values: vec![first.f],
    };
    if first.f < lower_bound + 1.0 {
        out.termination = Termination::Prune;
    }
    if !settings.use_cuts || out.termination == Termination::Prune {
        out.pool = pool;
        return Ok(out);
    }

    let per_update = settings.cuts_per_update.unwrap_or((5 * n).min(300));
    let mut center_f = first.f;
    let mut center_x = first.x.clone();
    let mut bundle = vec![Element {
        alpha: relax.objective(&first.x),
        x: first.x,
    }];
    let mut u = settings.initial_weight;
    let mut descents = 0usize;
    let mut enrich_rounds = 0;
    update_pool(&mut pool, &center_x, per_update, Some(settings.gamma_drop));

    out.termination = loop {
        if out.evals >= settings.max_evals {
            break Termination::Budget;
        }
        let alpha: Vec<f64> = bundle.iter().map(|e| e.alpha).collect();
        let mut g = DMatrix::zeros(pool.len(), bundle.len());
        for (col, e) in bundle.iter().enumerate() {
            g.set_column(col, &DVector::from_vec(cuts::evaluate(&pool, &e.x)));
        }
        let center = DVector::from_column_slice(pool.gamma());
        let sub = qp::solve(&alpha, &g, &center, u, 1e-9, 5000);
        let predicted = center_f - sub.model;
        if predicted <= settings.stall_tol * (1.0 + center_f.abs()) {
            // Enrich only: dropping zero-multiplier cuts here would let the
            // same cuts be separated again forever.
            enrich_rounds += 1;
            if enrich_rounds > 3 || update_pool(&mut pool, &center_x, per_update, None) == 0 {
                break Termination::Stall;
            }
            continue;
        }

        enrich_rounds = 0;
        let cand: Vec<f64> = sub.gamma.iter().copied().collect();
        let val = match oracle_eval(&pool, &cand, relax, settings.ipm_tol) {
            Ok(v) => v,
            Err(_) => break Termination::OracleFailure,
        };
        out.evals += 1;
        out.values.push(val.f);
        if val.f < out.bound {
            out.bound = val.f;
            out.x = val.x.clone();
        }

        let descent = val.f <= center_f - settings.descent_ratio * predicted;
        if bundle.len() + 1 > settings.max_bundle {
            bundle = aggregate(bundle, &sub.lambda, settings.max_bundle);
        }
        bundle.push(Element {
            alpha: relax.objective(&val.x),
            x: val.x.clone(),
        });
        out.trace.push(BundleEvent {
            eval: out.evals,
            f: val.f,
            cuts: pool.len(),
            kind: if descent { StepKind::Descent } else { StepKind::Null },
        });
        if descent {
            pool.set_gamma(&cand);
            center_f = val.f;
            center_x = val.x;
            descents += 1;
            u = (u * 0.5).max(1e-6);
            if descents % settings.update_period == 0 {
                update_pool(&mut pool, &center_x, per_update, Some(settings.gamma_drop));
            }
        } else {
            u = (u * 2.0).min(1e6);
        }
        if out.bound < lower_bound + 1.0 {
            break Termination::Prune;
        }
    };
    out.pool = pool;
    Ok(out)
}

/// Drops cuts with negligible multipliers, then adds the most violated new
/// ones at `x`. Returns how many of those survive the capacity limit.
fn update_pool(pool: &mut CutPool, x: &DMatrix<f64>, per_update: usize, gamma_drop: Option<f64>) -> usize {
    if let Some(threshold) = gamma_drop {
        pool.remove_below(threshold);
    }
    let fresh = cuts::separate(x, per_update, cuts::VIOLATION_TOL, Some(pool));
    pool.add(fresh.iter().copied());
    pool.enforce_capacity();
    fresh.iter().filter(|c| pool.contains(c)).count()
}

/// Merges all but the newest `keep - 2` elements into their `λ`-weighted
/// average, leaving room for one new element.
fn aggregate(bundle: Vec<Element>, lambda: &[f64], keep: usize) -> Vec<Element> {
    let recent = keep.saturating_sub(2);
    let split = bundle.len() - recent.min(bundle.len());
    let weight: f64 = lambda[..split].iter().sum();
    let mut iter = bundle.into_iter();
    let old: Vec<Element> = iter.by_ref().take(split).collect();
    let merged = if weight > 1e-12 {
        let mut x = DMatrix::zeros(old[0].x.nrows(), old[0].x.ncols());
        let mut alpha = 0.0;
        for (e, &l) in old.iter().zip(lambda) {
            x += &e.x * (l / weight);
            alpha += e.alpha * l / weight;
        }
        Element { x, alpha }
    } else {
        old.into_iter().last().expect("split is positive")
    };
    std::iter::once(merged).chain(iter).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GenSpec};
    use crate::oracle::enumerate;
    use crate::relaxation::build_padded;

    #[test]
    fn zero_multipliers_give_the_sdp_bound() {
        let inst = generate(&GenSpec::new(10, 50, 1));
        let relax = build_padded(&inst).unwrap();
        let pool = CutPool::new(100);
        let f0 = oracle_eval(&pool, &[], &relax, 1e-7).unwrap().f;
        let sdp = ipm::bound(&relax, None, 1e-7).unwrap();
        assert!((f0 - sdp).abs() < 1e-9 * (1.0 + sdp.abs()));
    }

    #[test]
    fn bound_is_valid_and_not_above_f0() {
        for seed in 0..8 {
            let inst = generate(&GenSpec::new(11, 50, seed));
            let opt = enumerate(&inst).unwrap().value.unwrap() as f64;
            let relax = build_padded(&inst).unwrap();
            let res = minimize(&relax, f64::NEG_INFINITY, &BundleSettings::default()).unwrap();
            assert!(res.bound >= opt - 1e-6, "seed {seed}: {} < {opt}", res.bound);
            assert!(res.bound <= res.sdp_bound + 1e-6);
            assert!(res.values.iter().all(|&v| v >= opt - 1e-6));
        }
    }

    #[test]
    fn prunes_against_optimum() {
        for seed in 0..5 {
            let inst = generate(&GenSpec::new(10, 75, seed));
            let opt = enumerate(&inst).unwrap().value.unwrap() as f64;
            let relax = build_padded(&inst).unwrap();
            let res = minimize(&relax, opt, &BundleSettings::default()).unwrap();
            assert!(matches!(res.termination, Termination::Prune | Termination::Stall | Termination::Budget));
            assert!(res.bound >= opt - 1e-6);
        }
    }
}
