//! Exhaustive enumeration. Slow and obviously correct; it is the ground truth
//! for tests.

use thiserror::Error;

use crate::instance::Instance;

pub const MAX_ITEMS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("enumeration is limited to n <= {MAX_ITEMS}, got n = {0}")]
pub struct TooLarge(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Optimum including the instance offset, `None` if no feasible subset exists.
    pub value: Option<i64>,
    pub argmax: Vec<bool>,
    pub feasible_count: u64,
}

/// Visits every k-subset in lexicographic order. The first maximizer found wins.
pub fn enumerate(inst: &Instance) -> Result<OracleResult, TooLarge> {
    let n = inst.n();
    let k = inst.k();
    if n > MAX_ITEMS {
        return Err(TooLarge(n));
    }
    let mut best: Option<(i64, Vec<bool>)> = None;
    let mut feasible_count = 0;
    if k <= n {
        let mut idx: Vec<usize> = (0..k).collect();
        let mut x = vec![false; n];
        loop {
            x.iter_mut().for_each(|v| *v = false);
            for &i in &idx {
                x[i] = true;
            }
            if inst.load(&x) <= inst.capacity() {
                feasible_count += 1;
                let v = inst.total_value(&x);
                if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                    best = Some((v, x.clone()));
                }
            }
            // advance to the next combination
            let mut i = k;
            while i > 0 && idx[i - 1] == i - 1 + n - k {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            let i = i - 1;
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(match best {
        Some((v, x)) => OracleResult {
            value: Some(v),
            argmax: x,
            feasible_count,
        },
        None => OracleResult {
            value: None,
            argmax: vec![false; n],
            feasible_count,
        },
    })
}
