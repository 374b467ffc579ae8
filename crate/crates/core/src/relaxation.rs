//! Semidefinite relaxation in ±1 variables.
//!
//! With `y = 2x − e` and a homogenizing coordinate, `f(x) = ⟨C̃, (1;y)(1;y)ᵗ⟩`.
//! Every feasible lifted matrix has `(n−2k; e)` in its kernel, so it is
//! written as `Y = V X Vᵗ` with `V = [eᵗ/(2k−n); I]`, leaving the n×n problem
//!
//! ```text
//! max ⟨C̄, X⟩  s.t.  diag(X) = e,  ⟨eeᵗ, X⟩ = (2k−n)²,  ⟨āāᵗ, X⟩ ≤ (b−b′)²,  X ⪰ 0
//! ```
//!
//! where `C̄ = VᵗC̃V` and `ā = (aᵗe − (b+b′))/(2k−n)·e + a`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::instance::{preprocess, Instance, Preprocessed, Status};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelaxationError {
    #[error("n = 2k: the projection 1/(2k-n) is undefined")]
    DegenerateCardinality,
    #[error("k = {k} exceeds k_max = {k_max}")]
    Infeasible { k: usize, k_max: usize },
    #[error("binary point has {found} selected items, expected {expected}")]
    CardinalityMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone)]
pub struct RelaxationData {
    /// Order of `X`.
    pub dim: usize,
    /// Items of the instance the data was built from; `dim` may exceed it by a
    /// blocker item.
    pub items: usize,
    pub k: usize,
    pub c_bar: DMatrix<f64>,
    pub a_bar: DVector<f64>,
    /// `(2k − n)²`
    pub rhs_card: f64,
    /// `(b − b′)²`
    pub rhs_cap: f64,
    /// Objective constant carried outside the matrix (the instance offset).
    pub const_term: f64,
    /// `1/(2k − n)`
    pub proj_scale: f64,
}

/// `C̃` of order n+1 with `⟨C̃, (1;y)(1;y)ᵗ⟩ = xᵗCx` for `y = 2x − e`.
pub fn homogenized_cost(inst: &Instance) -> DMatrix<f64> {
    let n = inst.n();
    let c = profit_matrix(inst);
    let ce = c.column_sum();
    let ete = ce.sum();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out[(0, 0)] = ete;
    for i in 0..n {
        out[(0, i + 1)] = ce[i];
        out[(i + 1, 0)] = ce[i];
    }
    out.view_mut((1, 1), (n, n)).copy_from(&c);
    out * 0.25
}

/// `V = [eᵗ/(2k−n); I]`, of size (n+1)×n.
pub fn projection(n: usize, k: usize) -> Result<DMatrix<f64>, RelaxationError> {
    let d = 2 * k as i64 - n as i64;
    if d == 0 {
        return Err(RelaxationError::DegenerateCardinality);
    }
    let mut v = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        v[(0, j)] = 1.0 / d as f64;
        v[(j + 1, j)] = 1.0;
    }
    Ok(v)
}

pub fn profit_matrix(inst: &Instance) -> DMatrix<f64> {
    let n = inst.n();
    DMatrix::from_fn(n, n, |i, j| inst.profit(i, j) as f64)
}

pub fn build(inst: &Instance, prep: &Preprocessed) -> Result<RelaxationData, RelaxationError> {
    let n = inst.n();
    let k = inst.k();
    if matches!(prep.status, Status::Infeasible) {
        return Err(RelaxationError::Infeasible { k, k_max: prep.k_max });
    }
    let v = projection(n, k)?;
    let d = (2 * k as i64 - n as i64) as f64;
    let c_tilde = homogenized_cost(inst);
    let mut c_bar = v.transpose() * c_tilde * &v;
    c_bar = (&c_bar + c_bar.transpose()) * 0.5;

    let b = inst.capacity() as f64;
    let b_prime = prep.b_prime as f64;
    let total: f64 = inst.weights().iter().map(|&w| w as f64).sum();
    let shift = (total - (b + b_prime)) / d;
    let a_bar = DVector::from_iterator(n, inst.weights().iter().map(|&w| shift + w as f64));

    Ok(RelaxationData {
        dim: n,
        items: n,
        k,
        c_bar,
        a_bar,
        rhs_card: d * d,
        rhs_cap: (b - b_prime).powi(2),
        const_term: inst.offset() as f64,
        proj_scale: 1.0 / d,
    })
}

/// Like [`build`], but resolves `n = 2k` by appending an item that can never
/// be selected (weight `b + 1`, zero profits).
pub fn build_padded(inst: &Instance) -> Result<RelaxationData, RelaxationError> {
    if inst.n() == 2 * inst.k() {
        let padded = inst.with_blocker_item();
        let mut data = build(&padded, &preprocess(&padded))?;
        data.items = inst.n();
        Ok(data)
    } else {
        build(inst, &preprocess(inst))
    }
}

/// `X = yyᵗ` with `y = 2x − e`.
pub fn feasible_x_from_binary(x: &[bool], k: usize) -> Result<DMatrix<f64>, RelaxationError> {
    let found = x.iter().filter(|&&v| v).count();
    if found != k {
        return Err(RelaxationError::CardinalityMismatch { expected: k, found });
    }
    let y = pm_one(x);
    Ok(&y * y.transpose())
}

pub fn pm_one(x: &[bool]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().map(|&v| if v { 1.0 } else { -1.0 }))
}

/// Reads `y` off the first row of `Y = VXVᵗ` (which is `y` itself when `X` is
/// rank one) and maps it back to `[0,1]`.
pub fn extract_fractional(x: &DMatrix<f64>, data: &RelaxationData) -> Vec<f64> {
    let xe = x.column_sum();
    (0..data.items)
        .map(|i| ((data.proj_scale * xe[i] + 1.0) * 0.5).clamp(0.0, 1.0))
        .collect()
}

impl RelaxationData {
    /// `⟨C̄, X⟩ + const_term`.
    pub fn objective(&self, x: &DMatrix<f64>) -> f64 {
        self.c_bar.dot(x) + self.const_term
    }

    pub fn capacity_lhs(&self, x: &DMatrix<f64>) -> f64 {
        (x * &self.a_bar).dot(&self.a_bar)
    }

    pub fn cardinality_lhs(&self, x: &DMatrix<f64>) -> f64 {
        x.sum()
    }

    /// Pads a binary point of the original items to `dim` with unselected
    /// blocker entries.
    pub fn lift_binary(&self, x: &[bool]) -> Vec<bool> {
        let mut v = x.to_vec();
        v.resize(self.dim, false);
        v
    }
}
