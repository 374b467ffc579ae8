//! Random instances in the style of the classical QKP generators: each
//! unordered pair (diagonal included) is nonzero with probability δ/100.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::instance::{preprocess, validate, Instance, RawInstance, Symmetry};

#[derive(Debug, Clone, Serialize)]
pub struct GenSpec {
    pub n: usize,
    /// Percentage of nonzero profit pairs, in (0, 100].
    pub density_percent: u32,
    pub seed: u64,
    pub weight_range: (i64, i64),
    pub profit_range: (i64, i64),
}

impl GenSpec {
    pub fn new(n: usize, density_percent: u32, seed: u64) -> Self {
        GenSpec {
            n,
            density_percent,
            seed,
            weight_range: (1, 50),
            profit_range: (1, 100),
        }
    }

    pub fn file_name(&self) -> String {
        format!("kqkp_n{}_d{}_s{}.txt", self.n, self.density_percent, self.seed)
    }
}

/// Draws profits, weights, then `b ∈ [max a, Σa − 1]` (redrawing weights until
/// at least two items fit), then `k ∈ [2, k_max]`.
pub fn generate(spec: &GenSpec) -> Instance {
    assert!(spec.n >= 3, "need at least three items so that 2 <= k <= k_max < n");
    assert!(
        spec.density_percent > 0 && spec.density_percent <= 100,
        "density must be in (0, 100]"
    );
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.density_percent as f64 / 100.0;
    let mut c = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in i..n {
            if rng.gen_bool(p) {
                let v = rng.gen_range(spec.profit_range.0..=spec.profit_range.1);
                c[i][j] = v;
                c[j][i] = v;
            }
        }
    }
    loop {
        let a: Vec<i64> = (0..n)
            .map(|_| rng.gen_range(spec.weight_range.0..=spec.weight_range.1))
            .collect();
        let max_a = *a.iter().max().expect("n >= 3");
        let total: i64 = a.iter().sum();
        let b = rng.gen_range(max_a..total);
        let raw = RawInstance {
            k: 2,
            b,
            a,
            c: c.clone(),
        };
        let inst = validate(raw, Symmetry::Reject).expect("generated data satisfies the standing assumptions");
        let k_max = preprocess(&inst).k_max;
        if k_max < 2 {
            continue;
        }
        let k = rng.gen_range(2..=k_max);
        return inst.with_k(k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_density_has_no_zero_pairs() {
        let inst = generate(&GenSpec::new(30, 100, 7));
        for i in 0..30 {
            for j in i..30 {
                assert!(inst.profit(i, j) > 0);
            }
        }
    }

    #[test]
    fn always_valid() {
        for seed in 0..1000 {
            let inst = generate(&GenSpec::new(3 + (seed as usize % 20), 1 + (seed % 100) as u32, seed));
            let back = validate(inst.to_raw(), Symmetry::Reject).unwrap();
            let prep = preprocess(&back);
            assert!(back.k() >= 2 && back.k() <= prep.k_max);
        }
    }

    #[test]
    fn measured_density_tracks_target() {
        for delta in [25u32, 50, 75] {
            let mut nonzero = 0usize;
            let mut total = 0usize;
            for seed in 0..100 {
                let inst = generate(&GenSpec::new(100, delta, seed));
                for i in 0..100 {
                    for j in (i + 1)..100 {
                        total += 1;
                        nonzero += (inst.profit(i, j) != 0) as usize;
                    }
                }
            }
            let measured = 100.0 * nonzero as f64 / total as f64;
            assert!((measured - delta as f64).abs() <= 3.0, "{measured} vs {delta}");
        }
    }

    #[test]
    fn reproducible() {
        let s = GenSpec::new(40, 50, 99);
        assert_eq!(generate(&s).to_text(), generate(&s).to_text());
        assert_ne!(generate(&s).to_text(), generate(&GenSpec::new(40, 50, 100)).to_text());
        assert_eq!(s.file_name(), "kqkp_n40_d50_s99.txt");
    }
}
