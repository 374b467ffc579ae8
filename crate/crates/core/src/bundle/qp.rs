//! Proximal model subproblem
//!
//! ```text
//! min_{γ ≥ 0}  max_i (α_i + g_iᵗγ) + (u/2)‖γ − γ̂‖²
//! ```
//!
//! solved through its dual over the unit simplex,
//! `ψ(λ) = λᵗα + min_{γ≥0} (Gλ)ᵗγ + (u/2)‖γ − γ̂‖²`, whose inner minimizer is
//! `γ(λ) = max(0, γ̂ − Gλ/u)`. ψ is concave with a `‖G‖²/u`-Lipschitz
//! gradient, so accelerated projected gradient ascent applies.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QpResult {
    /// Convex multipliers of the bundle elements.
    pub lambda: Vec<f64>,
    /// Candidate point `γ(λ)`.
    pub gamma: DVector<f64>,
    /// Cutting-plane model `max_i α_i + g_iᵗγ` at `gamma`.
    pub model: f64,
    /// Primal objective minus `ψ(λ)`; nonnegative up to rounding.
    pub gap: f64,
    pub iterations: usize,
}

/// `g` holds one subgradient per column.
pub fn solve(alpha: &[f64], g: &DMatrix<f64>, center: &DVector<f64>, u: f64, tol: f64, max_iter: usize) -> QpResult {
    let m = alpha.len();
    assert!(m > 0 && g.ncols() == m && g.nrows() == center.len() && u > 0.0);
    let alpha = DVector::from_column_slice(alpha);
    let gram = g.transpose() * g;
    let lip = gram.symmetric_eigenvalues().max().max(0.0) / u;

    let gamma_of = |lam: &DVector<f64>| (center - g * lam / u).map(|v| v.max(0.0));
    let dual = |lam: &DVector<f64>, gam: &DVector<f64>| {
        alpha.dot(lam) + (g * lam).dot(gam) + 0.5 * u * (gam - center).norm_squared()
    };
    let primal = |gam: &DVector<f64>| {
        let lin = &alpha + g.transpose() * gam;
        (lin.max(), 0.5 * u * (gam - center).norm_squared())
    };

    // Start on the element with the largest value at the center.
    let lin0 = &alpha + g.transpose() * center;
    let mut lam = DVector::zeros(m);
    lam[lin0.imax()] = 1.0;
    let finish = |lam: DVector<f64>, iterations: usize| {
        let gam = gamma_of(&lam);
        let (model, prox) = primal(&gam);
        let gap = (model + prox - dual(&lam, &gam)).max(0.0);
        QpResult {
            lambda: lam.iter().copied().collect(),
            gamma: gam,
            model,
            gap,
            iterations,
        }
    };
    if m == 1 || lip == 0.0 {
        return finish(lam, 0);
    }

    let step = 1.0 / lip;
    let mut mom = lam.clone();
    let mut t = 1.0f64;
    for it in 1..=max_iter {
        let gam = gamma_of(&mom);
        let grad = &alpha + g.transpose() * &gam;
        let next = project_simplex(&(&mom + grad * step));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        mom = &next + (&next - &lam) * ((t - 1.0) / t_next);
        lam = next;
        t = t_next;
        if it % 10 == 0 {
            let gam = gamma_of(&lam);
            let (model, prox) = primal(&gam);
            let p = model + prox;
            if p - dual(&lam, &gam) <= tol * (1.0 + p.abs()) {
                return finish(lam, it);
            }
        }
    }
    finish(lam, max_iter)
}

/// Euclidean projection onto `{λ ≥ 0, Σλ = 1}`.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        acc += s;
        let cand = (acc - 1.0) / (i + 1) as f64;
        if s - cand > 0.0 {
            theta = cand;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}
