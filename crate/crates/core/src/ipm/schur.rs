//! System matrix `m_ij = trace(Z⁻¹ A_j X A_i)` for the constraint family
//! `{e_i e_iᵗ}ᵢ ∪ {vvᵗ} ∪ {wwᵗ}`.
//!
//! Every constraint matrix has rank one, so each entry reduces to products of
//! bilinear forms and the whole matrix costs O(n²) once `Z⁻¹` is known:
//!
//! ```text
//! diag/diag  (Z⁻¹)_ij X_ij              diag/v  (Z⁻¹v)_i (Xv)_i
//! v/v        (vᵗZ⁻¹v)(vᵗXv)             v/w     (vᵗZ⁻¹w)(wᵗXv)
//! ```

use nalgebra::{DMatrix, DVector};

/// Rank-one assembly. `vectors` are the generators of the non-diagonal
/// constraints, in order; the result has order `n + vectors.len()`.
pub fn assemble(zinv: &DMatrix<f64>, x: &DMatrix<f64>, vectors: &[&DVector<f64>]) -> DMatrix<f64> {
    let n = x.nrows();
    let m = n + vectors.len();
    let mut out = DMatrix::zeros(m, m);
    out.view_mut((0, 0), (n, n)).copy_from(&zinv.component_mul(x));

    let zv: Vec<DVector<f64>> = vectors.iter().map(|v| zinv * *v).collect();
    let xv: Vec<DVector<f64>> = vectors.iter().map(|v| x * *v).collect();
    for (p, v) in vectors.iter().enumerate() {
        let col = n + p;
        for i in 0..n {
            let val = zv[p][i] * xv[p][i];
            out[(i, col)] = val;
            out[(col, i)] = val;
        }
        for (q, w) in vectors.iter().enumerate().skip(p) {
            // trace(Z⁻¹ wwᵗ X vvᵗ) = (vᵗZ⁻¹w)(wᵗXv)
            let val = v.dot(&zv[q]) * w.dot(&xv[p]);
            out[(col, n + q)] = val;
            out[(n + q, col)] = val;
        }
    }
    out
}

/// Entry-wise reference: forms `Z⁻¹ A_j X` for every constraint and takes the
/// trace against `A_i`. O(m n³ + m² n²).
pub fn assemble_naive(zinv: &DMatrix<f64>, x: &DMatrix<f64>, constraints: &[DMatrix<f64>]) -> DMatrix<f64> {
    let m = constraints.len();
    let products: Vec<DMatrix<f64>> = constraints.iter().map(|aj| zinv * aj * x).collect();
    DMatrix::from_fn(m, m, |i, j| {
        // trace(P A_i) = Σ_pq P_pq (A_i)_qp
        products[j].dot(&constraints[i].transpose())
    })
}

/// The explicit constraint matrices matching [`assemble`]'s ordering.
pub fn constraint_matrices(n: usize, vectors: &[&DVector<f64>]) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let mut m = DMatrix::zeros(n, n);
            m[(i, i)] = 1.0;
            m
        })
        .collect();
    out.extend(vectors.iter().map(|v| *v * v.transpose()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn matches_naive_on_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [2, 3, 6, 11] {
            let x = random_pd(&mut rng, n);
            let z = random_pd(&mut rng, n);
            let zinv = z.try_inverse().unwrap();
            let zinv = (&zinv + zinv.transpose()) * 0.5;
            let e = DVector::from_element(n, 1.0);
            let a = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let fast = assemble(&zinv, &x, &[&e, &a]);
            let slow = assemble_naive(&zinv, &x, &constraint_matrices(n, &[&e, &a]));
            let scale = 1.0 + slow.amax();
            assert!((&fast - &slow).amax() <= 1e-12 * scale, "n = {n}");
            assert!((&fast - fast.transpose()).amax() == 0.0);
        }
    }
}
