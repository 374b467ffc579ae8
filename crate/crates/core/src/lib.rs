//! Exact solver for the 0-1 k-item quadratic knapsack problem
//!
//! ```text
//! max xᵗCx   s.t.  aᵗx ≤ b,  eᵗx = k,  x ∈ {0,1}ⁿ
//! ```
//!
//! Upper bounds come from a semidefinite relaxation in ±1 variables, solved by
//! a predictor-corrector interior-point method that exploits the rank-one
//! structure of its constraints, and tightened with triangle inequalities by a
//! proximal bundle method over their multipliers. Lower bounds come from a
//! greedy/local-search heuristic and a variable-fixing heuristic driven by the
//! relaxation. A best-first branch-and-bound ties everything together, with a
//! relaxation-free branch-and-prune for small cardinalities.

pub mod instance;
pub mod ipm;
pub mod oracle;
pub mod relaxation;
pub mod cuts;
pub mod generator;
pub mod heuristics;
pub mod bundle;
pub mod bnb;
pub mod bench;
