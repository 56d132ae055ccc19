//! Sample allocation across strata.
//!
//! [`baseline`] holds the classical single-variable rules (equal shares,
//! proportional to size, minimum-variance, minimum-variance under a cost
//! budget). [`constraints`] turns multi-domain multi-variable precision
//! ceilings into the normalised form `sum_h a[q][h] / n_h <= 1`;
//! [`bethel`] solves the resulting convex programme by the multiplier
//! fixed point; [`onestage`] wires it all together and adds the
//! sensitivity analysis.

pub mod baseline;
pub mod bethel;
pub mod constraints;
pub mod onestage;

pub use baseline::{alloc_neyman, alloc_neyman_cost, alloc_proportional, alloc_uniform};
pub use bethel::{bethel_solve, BethelOptions, BethelSolution};
pub use constraints::{build_constraints, expected_cv, ConstraintMatrix, ConstraintTarget};
pub use onestage::{beat_1st, sensitivity_10pct, OneStageOptions};
