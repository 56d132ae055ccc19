//! One-stage allocation entry point: cost-minimal stratified sample sizes
//! under multi-domain CV ceilings, with reference allocations and a
//! per-ceiling sensitivity analysis.

use crate::allocation::baseline::{alloc_proportional, alloc_uniform};
use crate::allocation::bethel::{bethel_solve, BethelOptions};
use crate::allocation::constraints::{build_constraints, expected_cv};
use crate::error::Result;
use crate::model::{
    build_layout, resolve_constraints, AllocationResult, CvRow, DomainConstraint, IterationRow,
    PrecisionConstraints, SensitivityRow, StrataTable, StratumAllocation,
};

/// Options for [`beat_1st`].
#[derive(Debug, Clone, Default)]
pub struct OneStageOptions {
    pub solver: BethelOptions,
    /// Skip the (L x J x domains) re-solves of the sensitivity table.
    pub skip_sensitivity: bool,
}

fn census_preset(strata: &StrataTable) -> Vec<Option<u64>> {
    strata
        .strata
        .iter()
        .map(|s| if s.census { Some(s.pop) } else { None })
        .collect()
}

/// Relax each (domain, variable) ceiling by 10% in turn, re-solve, and
/// report the change in total sample size. Inactive ceilings report zero.
pub fn sensitivity_10pct(
    strata: &StrataTable,
    resolved: &[DomainConstraint],
    preset: &[Option<u64>],
    opts: &BethelOptions,
) -> Result<Vec<SensitivityRow>> {
    let base = {
        let m = build_constraints(strata, resolved)?;
        bethel_solve(strata, &m, preset, opts)?
    };
    sensitivity_against(strata, resolved, preset, opts, &base.n_int)
}

pub(crate) fn sensitivity_against(
    strata: &StrataTable,
    resolved: &[DomainConstraint],
    preset: &[Option<u64>],
    opts: &BethelOptions,
    base_n: &[u64],
) -> Result<Vec<SensitivityRow>> {
    let base_total: i64 = base_n.iter().map(|&v| v as i64).sum();
    let n_base: Vec<f64> = base_n.iter().map(|&v| v as f64).collect();
    let base_cv = expected_cv(strata, resolved, &n_base)?;
    let mut rows = Vec::new();
    for (d, dc) in resolved.iter().enumerate() {
        for j in 0..strata.n_vars {
            let mut relaxed: Vec<DomainConstraint> = resolved.to_vec();
            relaxed[d].cvs[j] *= 1.1;
            let m = build_constraints(strata, &relaxed)?;
            let sol = bethel_solve(strata, &m, preset, opts)?;
            let total: i64 = sol.n_int.iter().map(|&v| v as i64).sum();
            rows.push(SensitivityRow {
                domain: dc.category.clone(),
                var: j + 1,
                planned_cv: dc.cvs[j],
                expected_cv: base_cv[d].cvs[j],
                delta_n: total - base_total,
            });
        }
    }
    Ok(rows)
}

/// Solve the one-stage problem for the given strata and precision rows.
///
/// The result carries, per stratum, the optimal integer sample size plus
/// proportional and equal-share allocations of the same total for
/// comparison; expected vs planned CVs per constrained domain; and the
/// 10%-relaxation sensitivity table.
pub fn beat_1st(
    strata: &StrataTable,
    precision: &[PrecisionConstraints],
    opts: &OneStageOptions,
) -> Result<AllocationResult> {
    let layout = build_layout(strata);
    let resolved = resolve_constraints(strata, &layout, precision)?;
    let matrix = build_constraints(strata, &resolved)?;
    let preset = census_preset(strata);
    let sol = bethel_solve(strata, &matrix, &preset, &opts.solver)?;

    let n_f: Vec<f64> = sol.n_int.iter().map(|&v| v as f64).collect();
    let expected = expected_cv(strata, &resolved, &n_f)?;
    let planned: Vec<CvRow> = resolved
        .iter()
        .map(|dc| CvRow {
            domain: dc.category.clone(),
            cvs: dc.cvs.clone(),
        })
        .collect();
    let sensitivity = if opts.skip_sensitivity {
        Vec::new()
    } else {
        sensitivity_against(strata, &resolved, &preset, &opts.solver, &sol.n_int)?
    };

    let total: u64 = sol.n_int.iter().sum();
    let pops: Vec<u64> = strata.strata.iter().map(|s| s.pop).collect();
    let alloc_prop = alloc_proportional(total, &pops)?;
    let alloc_equal = alloc_uniform(total, &pops)?;

    let rows: Vec<StratumAllocation> = strata
        .strata
        .iter()
        .zip(&sol.n_int)
        .map(|(s, &n)| StratumAllocation {
            stratum: s.id.clone(),
            ssu: n,
            psu_sr: 0,
            psu_nsr: 0,
            threshold: 0.0,
        })
        .collect();

    let params = vec![
        ("stages".to_string(), "1".to_string()),
        ("minnumstrat".to_string(), opts.solver.minnumstrat.to_string()),
        ("epsilon".to_string(), opts.solver.epsilon.to_string()),
        ("max_iters".to_string(), opts.solver.max_iters.to_string()),
        ("solver_iterations".to_string(), sol.iterations.to_string()),
    ];

    Ok(AllocationResult {
        rows,
        alloc_prop,
        alloc_equal,
        iterations: vec![IterationRow {
            iteration: 0,
            psu_sr: 0,
            psu_nsr: 0,
            psu_total: 0,
            ssu_total: total,
        }],
        expected_cv: expected,
        planned_cv: planned,
        sensitivity,
        deft_trace: Vec::new(),
        params,
        converged: sol.converged,
        two_stage: false,
    })
}
