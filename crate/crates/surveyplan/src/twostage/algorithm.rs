//! The two-stage allocation loop.

use crate::allocation::baseline::{alloc_proportional, alloc_uniform};
use crate::allocation::bethel::{bethel_solve, BethelOptions};
use crate::allocation::constraints::{build_constraints, expected_cv};
use crate::allocation::onestage::sensitivity_against;
use crate::error::{Error, Result};
use crate::model::{
    build_layout, resolve_constraints, AllocationResult, CvRow, DeftTraceRow, DesignInputs,
    DesignParams, IterationRow, PsuRecord, StrataTable, StratumAllocation,
};
use crate::twostage::cluster::{compute_threshold, deff_extended, split_sr_nsr};

/// Stop rule of the iteration: any single criterion ends it.
#[derive(Debug, Clone)]
pub struct StopRule {
    /// Stop when the SSU total moves by less than this many units.
    pub ssu_diff: u64,
    /// Stop when no deft entry moves by this much or more.
    pub deft_diff: f64,
    /// Hard iteration cap.
    pub max_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            ssu_diff: 5,
            deft_diff: 0.06,
            max_iters: 20,
        }
    }
}

/// Options for [`beat_2st`].
#[derive(Debug, Clone)]
pub struct TwoStageOptions {
    pub solver: BethelOptions,
    /// Minimum PSUs drawn from the sampled part of a stratum.
    pub min_psu_strat: u64,
    pub stop: StopRule,
    pub skip_sensitivity: bool,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        TwoStageOptions {
            solver: BethelOptions::default(),
            min_psu_strat: 2,
            stop: StopRule::default(),
            skip_sensitivity: false,
        }
    }
}

/// Structural state of one stratum for a given allocation: the threshold
/// split and the PSU/SSU bookkeeping derived from it. Design effects are
/// filled by the loop (per variable).
#[derive(Debug, Clone)]
pub struct TwoStageState {
    pub stratum: String,
    pub threshold: f64,
    pub pop_sr: u64,
    pub pop_nsr: u64,
    /// Self-representing PSUs (all of them enter the sample).
    pub psu_sr: u64,
    /// PSUs to draw from the sampled part.
    pub psu_nsr: u64,
    /// Sample allocated to the self-representing part (elementary units).
    pub n_sr: f64,
    /// Sample allocated to the sampled part.
    pub n_nsr: f64,
    /// Cluster take of the self-representing part: the final-stage unit
    /// size, since the first stage there is exhaustive.
    pub b_sr: f64,
    /// Cluster take of the sampled part: allocated units per drawn PSU.
    pub b_nsr: f64,
    /// Per-variable design effect (filled by the loop; 1 at iteration 0).
    pub deff: Vec<f64>,
    pub deft: Vec<f64>,
}

pub(crate) fn align_design(
    strata: &StrataTable,
    design: &[DesignParams],
) -> Result<Vec<(f64, u64)>> {
    strata
        .strata
        .iter()
        .map(|s| {
            design
                .iter()
                .find(|d| d.stratum == s.id)
                .map(|d| (d.delta, d.minimum))
                .ok_or_else(|| {
                    Error::Reference(format!("design parameters missing for stratum {}", s.id))
                })
        })
        .collect()
}

pub(crate) fn group_mos(strata: &StrataTable, psus: &[PsuRecord]) -> Result<Vec<Vec<u64>>> {
    let mut by: Vec<Vec<u64>> = vec![Vec::new(); strata.len()];
    for p in psus {
        match strata.index_of(&p.stratum) {
            Some(h) => by[h].push(p.mos),
            None => {
                return Err(Error::Reference(format!(
                    "PSU {} references unknown stratum {}",
                    p.id, p.stratum
                )))
            }
        }
    }
    for (h, s) in strata.strata.iter().enumerate() {
        if by[h].is_empty() {
            return Err(Error::Reference(format!("stratum {} has no PSUs", s.id)));
        }
        let total: u64 = by[h].iter().sum();
        if total != s.pop {
            return Err(Error::Reference(format!(
                "stratum {}: N={} but PSU sizes sum to {}; run the input check first",
                s.id, s.pop, total
            )));
        }
    }
    Ok(by)
}

/// Threshold split and PSU counts for every stratum under allocation `n`.
/// Census strata are reported fully self-representing with threshold 0.
pub fn stratum_states(
    strata: &StrataTable,
    mos_by_stratum: &[Vec<u64>],
    design: &[(f64, u64)],
    n: &[u64],
    min_psu_strat: u64,
) -> Result<Vec<TwoStageState>> {
    if n.len() != strata.len() {
        return Err(Error::Invalid("allocation length mismatch".into()));
    }
    let mut out = Vec::with_capacity(strata.len());
    for (h, s) in strata.strata.iter().enumerate() {
        let (delta, minimum) = design[h];
        let mos = &mos_by_stratum[h];
        if s.census {
            out.push(TwoStageState {
                stratum: s.id.clone(),
                threshold: 0.0,
                pop_sr: s.pop,
                pop_nsr: 0,
                psu_sr: mos.len() as u64,
                psu_nsr: 0,
                n_sr: s.pop as f64,
                n_nsr: 0.0,
                b_sr: delta,
                b_nsr: 0.0,
                deff: Vec::new(),
                deft: Vec::new(),
            });
            continue;
        }
        if n[h] == 0 {
            return Err(Error::Invalid(format!(
                "stratum {} has an empty allocation; the floor must be at least 1",
                s.id
            )));
        }
        let f = n[h] as f64 / s.pop as f64;
        let threshold = compute_threshold(minimum, delta, f)?;
        let split = split_sr_nsr(mos, threshold);
        let n_sr = n[h] as f64 * split.pop_sr as f64 / s.pop as f64;
        let n_nsr = n[h] as f64 * split.pop_nsr as f64 / s.pop as f64;
        let psu_nsr = if split.pop_nsr > 0 {
            let need = (n_nsr / minimum as f64).ceil() as u64;
            need.max(min_psu_strat).min(split.nsr.len() as u64)
        } else {
            0
        };
        let b_nsr = if psu_nsr > 0 {
            (n_nsr / psu_nsr as f64).max(1.0)
        } else {
            0.0
        };
        out.push(TwoStageState {
            stratum: s.id.clone(),
            threshold,
            pop_sr: split.pop_sr,
            pop_nsr: split.pop_nsr,
            psu_sr: split.sr.len() as u64,
            psu_nsr,
            n_sr,
            n_nsr,
            b_sr: delta,
            b_nsr,
            deff: Vec::new(),
            deft: Vec::new(),
        });
    }
    Ok(out)
}

fn inflate(strata: &StrataTable, deft: &[Vec<f64>], effst: &[Vec<f64>]) -> StrataTable {
    let mut out = strata.clone();
    for (h, s) in out.strata.iter_mut().enumerate() {
        for j in 0..s.stdevs.len() {
            s.stdevs[j] *= deft[h][j] * effst[h][j].sqrt();
        }
    }
    out
}

/// Two-stage allocation: iterate the one-stage solve with design-effect
/// inflation until the allocation stabilises. Requires PSU, design and
/// intraclass-correlation tables in `inputs`; starting deft and estimator
/// effects are optional (both default to 1).
pub fn beat_2st(inputs: &DesignInputs, opts: &TwoStageOptions) -> Result<AllocationResult> {
    let strata = &inputs.strata;
    let j_vars = strata.n_vars;
    let psus = inputs
        .psus
        .as_ref()
        .ok_or_else(|| Error::Invalid("two-stage allocation needs a PSU table".into()))?;
    let design = inputs
        .design
        .as_ref()
        .ok_or_else(|| Error::Invalid("two-stage allocation needs design parameters".into()))?;
    let rho = inputs
        .rho
        .as_ref()
        .ok_or_else(|| Error::Invalid("two-stage allocation needs intraclass correlations".into()))?;
    if opts.solver.minnumstrat == 0 || opts.min_psu_strat == 0 {
        return Err(Error::Invalid("stratum and PSU floors must be at least 1".into()));
    }

    let des = align_design(strata, design)?;
    let mos_by = group_mos(strata, psus)?;
    let rho_by: Vec<(&Vec<f64>, &Vec<f64>)> = strata
        .strata
        .iter()
        .map(|s| {
            rho.iter()
                .find(|r| r.stratum == s.id)
                .map(|r| (&r.rho_sr, &r.rho_nsr))
                .ok_or_else(|| {
                    Error::Reference(format!("correlations missing for stratum {}", s.id))
                })
        })
        .collect::<Result<_>>()?;
    let ones = vec![vec![1.0; j_vars]; strata.len()];
    let deft0: Vec<Vec<f64>> = match &inputs.deft {
        Some(rows) => strata
            .strata
            .iter()
            .map(|s| {
                rows.iter()
                    .find(|r| r.stratum == s.id)
                    .map(|r| r.deft.clone())
                    .ok_or_else(|| {
                        Error::Reference(format!("starting deft missing for stratum {}", s.id))
                    })
            })
            .collect::<Result<_>>()?,
        None => ones.clone(),
    };
    let effst: Vec<Vec<f64>> = match &inputs.effst {
        Some(rows) => strata
            .strata
            .iter()
            .map(|s| {
                rows.iter()
                    .find(|r| r.stratum == s.id)
                    .map(|r| r.effst.clone())
                    .ok_or_else(|| {
                        Error::Reference(format!("estimator effect missing for stratum {}", s.id))
                    })
            })
            .collect::<Result<_>>()?,
        None => ones.clone(),
    };

    let layout = build_layout(strata);
    let resolved = resolve_constraints(strata, &layout, &inputs.constraints)?;
    let preset: Vec<Option<u64>> = strata
        .strata
        .iter()
        .map(|s| if s.census { Some(s.pop) } else { None })
        .collect();

    // Iteration 0: one-stage solve under the starting inflation.
    let mut deft_cur = deft0.clone();
    let mut strata_inf = inflate(strata, &deft_cur, &effst);
    let sol = bethel_solve(&strata_inf, &build_constraints(&strata_inf, &resolved)?, &preset, &opts.solver)?;
    let mut n_cur = sol.n_int.clone();
    let mut all_converged = sol.converged;

    let mut iterations = vec![IterationRow {
        iteration: 0,
        psu_sr: 0,
        psu_nsr: 0,
        psu_total: 0,
        ssu_total: n_cur.iter().sum(),
    }];
    let mut deft_trace: Vec<DeftTraceRow> = strata
        .strata
        .iter()
        .enumerate()
        .map(|(h, s)| DeftTraceRow {
            iteration: 0,
            stratum: s.id.clone(),
            deft: deft_cur[h].clone(),
        })
        .collect();

    let mut ssu_history: Vec<u64> = vec![n_cur.iter().sum()];
    let mut rule_stop = false;
    for iter in 1..=opts.stop.max_iters {
        let states = stratum_states(strata, &mos_by, &des, &n_cur, opts.min_psu_strat)?;

        let mut deft_new = vec![vec![1.0; j_vars]; strata.len()];
        for (h, s) in strata.strata.iter().enumerate() {
            if s.census {
                continue;
            }
            let st = &states[h];
            for j in 0..j_vars {
                let deff = deff_extended(
                    st.pop_sr as f64,
                    st.pop_nsr as f64,
                    st.n_sr,
                    st.n_nsr,
                    rho_by[h].0[j],
                    rho_by[h].1[j],
                    st.b_sr,
                    st.b_nsr,
                )?;
                deft_new[h][j] = deff.sqrt();
            }
        }

        let strata_inf_new = inflate(strata, &deft_new, &effst);
        let sol = bethel_solve(
            &strata_inf_new,
            &build_constraints(&strata_inf_new, &resolved)?,
            &preset,
            &opts.solver,
        )?;
        all_converged = all_converged && sol.converged;
        let n_new = sol.n_int.clone();
        let ssu_new: u64 = n_new.iter().sum();

        iterations.push(IterationRow {
            iteration: iter,
            psu_sr: states.iter().map(|s| s.psu_sr).sum(),
            psu_nsr: states.iter().map(|s| s.psu_nsr).sum(),
            psu_total: states.iter().map(|s| s.psu_sr + s.psu_nsr).sum(),
            ssu_total: ssu_new,
        });
        for (h, s) in strata.strata.iter().enumerate() {
            deft_trace.push(DeftTraceRow {
                iteration: iter,
                stratum: s.id.clone(),
                deft: deft_new[h].clone(),
            });
        }

        let deft_diff = deft_new
            .iter()
            .zip(&deft_cur)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0f64, f64::max);
        let prev_ssu = *ssu_history.last().unwrap();
        let ssu_diff = ssu_new.abs_diff(prev_ssu);

        // Period-2 oscillation: the total returns to the value of two
        // iterations ago without settling. Keep the smaller allocation.
        let oscillating = ssu_history.len() >= 2
            && ssu_history[ssu_history.len() - 2] == ssu_new
            && ssu_new != prev_ssu;
        if oscillating && ssu_new > prev_ssu {
            // Previous (smaller) iterate stays current; drop this one.
            log::warn!(
                "allocation oscillates between {prev_ssu} and {ssu_new} SSUs; keeping {prev_ssu}"
            );
            rule_stop = true;
            break;
        }

        deft_cur = deft_new;
        n_cur = n_new;
        strata_inf = strata_inf_new;
        ssu_history.push(ssu_new);

        if oscillating {
            log::warn!(
                "allocation oscillates between {prev_ssu} and {ssu_new} SSUs; keeping {ssu_new}"
            );
            rule_stop = true;
            break;
        }
        if ssu_diff < opts.stop.ssu_diff || deft_diff < opts.stop.deft_diff {
            rule_stop = true;
            break;
        }
    }
    if !rule_stop {
        log::warn!(
            "two-stage loop hit the {}-iteration cap before stabilising",
            opts.stop.max_iters
        );
    }

    // Recompute the split from the final allocation so the reported PSU
    // counts and thresholds are self-consistent with the final SSU column.
    let final_states = stratum_states(strata, &mos_by, &des, &n_cur, opts.min_psu_strat)?;

    let n_f: Vec<f64> = n_cur.iter().map(|&v| v as f64).collect();
    let expected = expected_cv(&strata_inf, &resolved, &n_f)?;
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
        sensitivity_against(&strata_inf, &resolved, &preset, &opts.solver, &n_cur)?
    };

    let total: u64 = n_cur.iter().sum();
    let pops: Vec<u64> = strata.strata.iter().map(|s| s.pop).collect();
    let alloc_prop = alloc_proportional(total, &pops)?;
    let alloc_equal = alloc_uniform(total, &pops)?;

    let rows: Vec<StratumAllocation> = strata
        .strata
        .iter()
        .enumerate()
        .map(|(h, s)| StratumAllocation {
            stratum: s.id.clone(),
            ssu: n_cur[h],
            psu_sr: final_states[h].psu_sr,
            psu_nsr: final_states[h].psu_nsr,
            threshold: final_states[h].threshold,
        })
        .collect();

    let params = vec![
        ("stages".to_string(), "2".to_string()),
        ("minnumstrat".to_string(), opts.solver.minnumstrat.to_string()),
        ("minPSUstrat".to_string(), opts.min_psu_strat.to_string()),
        ("epsilon".to_string(), opts.solver.epsilon.to_string()),
        ("max_solver_iters".to_string(), opts.solver.max_iters.to_string()),
        ("stop_ssu_diff".to_string(), opts.stop.ssu_diff.to_string()),
        ("stop_deft_diff".to_string(), opts.stop.deft_diff.to_string()),
        ("stop_max_iters".to_string(), opts.stop.max_iters.to_string()),
        ("iterations_run".to_string(), (iterations.len() - 1).to_string()),
    ];

    Ok(AllocationResult {
        rows,
        alloc_prop,
        alloc_equal,
        iterations,
        expected_cv: expected,
        planned_cv: planned,
        sensitivity,
        deft_trace,
        params,
        converged: all_converged && rule_stop,
        two_stage: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::onestage::{beat_1st, OneStageOptions};
    use crate::model::{PrecisionConstraints, RhoRow, StratumInfo};

    fn two_strata_inputs(rho_nsr: f64) -> DesignInputs {
        let strata = StrataTable {
            strata: vec![
                StratumInfo {
                    id: "north".into(),
                    pop: 10_000,
                    means: vec![20.0],
                    stdevs: vec![8.0],
                    cost: 1.0,
                    census: false,
                    domains: vec!["POP".into()],
                },
                StratumInfo {
                    id: "south".into(),
                    pop: 6_000,
                    means: vec![15.0],
                    stdevs: vec![6.0],
                    cost: 1.0,
                    census: false,
                    domains: vec!["POP".into()],
                },
            ],
            n_vars: 1,
            n_domain_types: 1,
        };
        // North: one big PSU (5000) + 10 of 500; south: 12 of 500.
        let mut psus = vec![PsuRecord {
            id: "n-big".into(),
            stratum: "north".into(),
            mos: 5000,
        }];
        for i in 0..10 {
            psus.push(PsuRecord {
                id: format!("n-{i}"),
                stratum: "north".into(),
                mos: 500,
            });
        }
        for i in 0..12 {
            psus.push(PsuRecord {
                id: format!("s-{i}"),
                stratum: "south".into(),
                mos: 500,
            });
        }
        DesignInputs {
            strata,
            constraints: vec![PrecisionConstraints {
                domain: "POP".into(),
                cvs: vec![0.02],
            }],
            psus: Some(psus),
            design: Some(vec![
                DesignParams { stratum: "north".into(), delta: 1.0, minimum: 50 },
                DesignParams { stratum: "south".into(), delta: 1.0, minimum: 50 },
            ]),
            rho: Some(vec![
                RhoRow { stratum: "north".into(), rho_sr: vec![1.0], rho_nsr: vec![rho_nsr] },
                RhoRow { stratum: "south".into(), rho_sr: vec![1.0], rho_nsr: vec![rho_nsr] },
            ]),
            deft: None,
            effst: None,
        }
    }

    #[test]
    fn zero_correlation_reproduces_the_one_stage_allocation() {
        let inputs = two_strata_inputs(0.0);
        let two = beat_2st(&inputs, &TwoStageOptions::default()).unwrap();
        let one = beat_1st(
            &inputs.strata,
            &inputs.constraints,
            &OneStageOptions::default(),
        )
        .unwrap();
        let n2: Vec<u64> = two.rows.iter().map(|r| r.ssu).collect();
        let n1: Vec<u64> = one.rows.iter().map(|r| r.ssu).collect();
        assert_eq!(n2, n1);
        // And the loop stopped immediately after one confirming pass.
        assert_eq!(two.iterations.len(), 2);
        assert_eq!(two.iterations[0].ssu_total, two.iterations[1].ssu_total);
    }

    #[test]
    fn iteration_zero_row_has_no_psus() {
        let inputs = two_strata_inputs(0.05);
        let res = beat_2st(&inputs, &TwoStageOptions::default()).unwrap();
        let r0 = &res.iterations[0];
        assert_eq!((r0.iteration, r0.psu_sr, r0.psu_nsr, r0.psu_total), (0, 0, 0, 0));
        assert!(r0.ssu_total > 0);
    }

    #[test]
    fn positive_correlation_costs_sample() {
        let flat = beat_2st(&two_strata_inputs(0.0), &TwoStageOptions::default()).unwrap();
        let hot = beat_2st(&two_strata_inputs(0.08), &TwoStageOptions::default()).unwrap();
        assert!(
            hot.total_ssu() > flat.total_ssu(),
            "{} <= {}",
            hot.total_ssu(),
            flat.total_ssu()
        );
        // deft grew somewhere.
        let max_deft = hot
            .deft_trace
            .iter()
            .flat_map(|r| r.deft.iter().copied())
            .fold(0.0f64, f64::max);
        assert!(max_deft > 1.0);
    }

    #[test]
    fn reported_psu_counts_match_the_final_allocation() {
        let inputs = two_strata_inputs(0.05);
        let res = beat_2st(&inputs, &TwoStageOptions::default()).unwrap();
        let des = align_design(&inputs.strata, inputs.design.as_ref().unwrap()).unwrap();
        let mos_by = group_mos(&inputs.strata, inputs.psus.as_ref().unwrap()).unwrap();
        let n: Vec<u64> = res.rows.iter().map(|r| r.ssu).collect();
        let states = stratum_states(&inputs.strata, &mos_by, &des, &n, 2).unwrap();
        for (row, st) in res.rows.iter().zip(&states) {
            assert_eq!(row.psu_sr, st.psu_sr);
            assert_eq!(row.psu_nsr, st.psu_nsr);
            assert_eq!(row.threshold, st.threshold);
        }
    }

    #[test]
    fn expected_cv_meets_the_ceiling_under_inflation() {
        let inputs = two_strata_inputs(0.06);
        let res = beat_2st(&inputs, &TwoStageOptions::default()).unwrap();
        for (exp, plan) in res.expected_cv.iter().zip(&res.planned_cv) {
            for (e, p) in exp.cvs.iter().zip(&plan.cvs) {
                assert!(e <= &(p + 1e-9), "{e} > {p}");
            }
        }
    }

    #[test]
    fn missing_psu_table_is_rejected() {
        let mut inputs = two_strata_inputs(0.0);
        inputs.psus = None;
        assert!(beat_2st(&inputs, &TwoStageOptions::default()).is_err());
    }

    #[test]
    fn incoherent_populations_are_rejected() {
        let mut inputs = two_strata_inputs(0.0);
        inputs.strata.strata[0].pop += 7;
        let err = beat_2st(&inputs, &TwoStageOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Reference(_)), "{err}");
    }

    #[test]
    fn census_stratum_stays_pinned_through_the_loop() {
        let mut inputs = two_strata_inputs(0.05);
        inputs.strata.strata[1].census = true;
        let res = beat_2st(&inputs, &TwoStageOptions::default()).unwrap();
        assert_eq!(res.rows[1].ssu, 6_000);
        assert_eq!(res.rows[1].psu_nsr, 0);
        assert_eq!(res.rows[1].psu_sr, 12);
    }
}
