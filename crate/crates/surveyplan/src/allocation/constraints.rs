//! Reduction of precision ceilings to the normalised constraint matrix.
//!
//! For a domain d (a union of strata), target variable j and ceiling cv,
//! requiring `CV(estimated mean) <= cv` under stratified simple random
//! sampling is algebraically equivalent to
//!
//! ```text
//! sum_{h in d} a[q][h] / n_h <= 1,
//! a[q][h] = N_h^2 S_hj^2 / (cv^2 Ybar_d^2 N_d^2 + sum_{h' in d} N_h' S_h'j^2)
//! ```
//!
//! where `Ybar_d` is the domain mean. The equivalence is exact, including
//! the finite-population correction, which is why both the solver and the
//! final feasibility check can work on `a` alone. Expected CVs, by
//! contrast, are always evaluated from the defining variance formula so the
//! two routes cross-check each other.

use crate::error::{Error, Result};
use crate::model::{CvRow, DomainConstraint, StrataTable};

/// One expanded constraint: a (domain category, variable) pair.
#[derive(Debug, Clone)]
pub struct ConstraintTarget {
    pub dom_type: usize,
    pub category: String,
    /// 0-based variable index.
    pub var: usize,
    pub cv: f64,
    pub strata_idx: Vec<usize>,
    /// Domain population.
    pub pop: f64,
    /// Domain mean of the variable.
    pub mean: f64,
    /// True when every member stratum has zero spread on this variable:
    /// the constraint holds for any allocation and is skipped by the
    /// solver.
    pub void: bool,
}

/// The normalised constraint system.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    /// `a[q][h]`, dense over all strata (zero outside the domain).
    pub a: Vec<Vec<f64>>,
    pub targets: Vec<ConstraintTarget>,
    pub n_strata: usize,
}

/// Build the matrix from resolved domain constraints, expanding each over
/// the target variables. A zero-spread (void) row is kept in `targets` for
/// reporting but dropped from the solve with a warning. A constrained
/// domain with mean zero on a variable has no defined CV and is an error.
pub fn build_constraints(
    strata: &StrataTable,
    resolved: &[DomainConstraint],
) -> Result<ConstraintMatrix> {
    let l = strata.len();
    let mut a = Vec::new();
    let mut targets = Vec::new();
    for dc in resolved {
        let pop: f64 = dc.strata_idx.iter().map(|&h| strata.strata[h].pop as f64).sum();
        for j in 0..strata.n_vars {
            let mean = dc
                .strata_idx
                .iter()
                .map(|&h| strata.strata[h].pop as f64 * strata.strata[h].means[j])
                .sum::<f64>()
                / pop;
            let sum_ns2: f64 = dc
                .strata_idx
                .iter()
                .map(|&h| strata.strata[h].pop as f64 * strata.strata[h].stdevs[j].powi(2))
                .sum();
            let void = sum_ns2 == 0.0;
            if void {
                log::warn!(
                    "domain {} variable {} has zero spread in every stratum; constraint dropped",
                    dc.category,
                    j + 1
                );
                a.push(vec![0.0; l]);
                targets.push(ConstraintTarget {
                    dom_type: dc.dom_type,
                    category: dc.category.clone(),
                    var: j,
                    cv: dc.cvs[j],
                    strata_idx: dc.strata_idx.clone(),
                    pop,
                    mean,
                    void,
                });
                continue;
            }
            if mean == 0.0 {
                return Err(Error::Invalid(format!(
                    "domain {} has mean zero for variable {}; a CV ceiling is undefined",
                    dc.category,
                    j + 1
                )));
            }
            let denom = dc.cvs[j].powi(2) * mean.powi(2) * pop.powi(2) + sum_ns2;
            let mut row = vec![0.0; l];
            for &h in &dc.strata_idx {
                let s = &strata.strata[h];
                row[h] = (s.pop as f64).powi(2) * s.stdevs[j].powi(2) / denom;
            }
            a.push(row);
            targets.push(ConstraintTarget {
                dom_type: dc.dom_type,
                category: dc.category.clone(),
                var: j,
                cv: dc.cvs[j],
                strata_idx: dc.strata_idx.clone(),
                pop,
                mean,
                void,
            });
        }
    }
    Ok(ConstraintMatrix {
        a,
        targets,
        n_strata: l,
    })
}

/// Expected coefficients of variation of the given allocation, computed
/// straight from the stratified variance formula (not from the matrix):
/// one row per resolved domain category, one value per variable.
///
/// `n` may be fractional (useful for continuous allocations); entries at or
/// above the population contribute zero variance.
pub fn expected_cv(
    strata: &StrataTable,
    resolved: &[DomainConstraint],
    n: &[f64],
) -> Result<Vec<CvRow>> {
    if n.len() != strata.len() {
        return Err(Error::Invalid(format!(
            "allocation has {} entries for {} strata",
            n.len(),
            strata.len()
        )));
    }
    let mut rows = Vec::with_capacity(resolved.len());
    for dc in resolved {
        let pop: f64 = dc.strata_idx.iter().map(|&h| strata.strata[h].pop as f64).sum();
        let mut cvs = Vec::with_capacity(strata.n_vars);
        for j in 0..strata.n_vars {
            let mean = dc
                .strata_idx
                .iter()
                .map(|&h| strata.strata[h].pop as f64 * strata.strata[h].means[j])
                .sum::<f64>()
                / pop;
            let mut var = 0.0;
            for &h in &dc.strata_idx {
                let s = &strata.strata[h];
                let nh = n[h];
                if !(nh > 0.0) {
                    return Err(Error::Invalid(format!(
                        "stratum {} has non-positive allocation {nh}",
                        s.id
                    )));
                }
                let pop_h = s.pop as f64;
                if nh < pop_h {
                    var += (pop_h / pop).powi(2)
                        * (1.0 / nh - 1.0 / pop_h)
                        * s.stdevs[j].powi(2);
                }
            }
            let cv = if var == 0.0 {
                0.0
            } else if mean == 0.0 {
                f64::INFINITY
            } else {
                var.sqrt() / mean.abs()
            };
            cvs.push(cv);
        }
        rows.push(CvRow {
            domain: dc.category.clone(),
            cvs,
        });
    }
    Ok(rows)
}
