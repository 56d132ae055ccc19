//! Workload-floor exploration: how the per-PSU interviewing minimum moves
//! the PSU and SSU totals.
//!
//! Raising the minimum makes each selected PSU carry more interviews, so
//! fewer PSUs are needed — but bigger takes raise the design effect, so
//! more interviews are needed overall. The grid makes that trade explicit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::DesignInputs;
use crate::twostage::algorithm::{beat_2st, TwoStageOptions};

/// One grid point: totals of the converged design at this workload floor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimumSensitivityRow {
    pub minimum: u64,
    pub psu_total: u64,
    pub ssu_total: u64,
}

/// Run the two-stage allocation over an evenly spaced grid of workload
/// floors from `lo` to `hi` (inclusive, `points` values rounded to
/// integers, duplicates collapsed), overriding every stratum's minimum.
/// Grid points are independent solves, so they evaluate in parallel;
/// results are ordered by minimum regardless of scheduling.
pub fn sensitivity_min_ssu(
    inputs: &DesignInputs,
    opts: &TwoStageOptions,
    lo: u64,
    hi: u64,
    points: usize,
) -> Result<Vec<MinimumSensitivityRow>> {
    if lo == 0 {
        return Err(Error::Invalid("workload floor must be at least 1".into()));
    }
    if hi < lo {
        return Err(Error::Invalid(format!("empty grid: {hi} < {lo}")));
    }
    if points == 0 {
        return Err(Error::Invalid("grid needs at least one point".into()));
    }
    let mut grid: Vec<u64> = if points == 1 || lo == hi {
        vec![lo]
    } else {
        (0..points)
            .map(|i| {
                let x = lo as f64 + i as f64 * (hi - lo) as f64 / (points - 1) as f64;
                x.round() as u64
            })
            .collect()
    };
    grid.dedup();

    let mut quiet = opts.clone();
    quiet.skip_sensitivity = true;

    grid.par_iter()
        .map(|&m| {
            let mut local = inputs.clone();
            if let Some(design) = local.design.as_mut() {
                for d in design.iter_mut() {
                    d.minimum = m;
                }
            }
            let res = beat_2st(&local, &quiet)?;
            Ok(MinimumSensitivityRow {
                minimum: m,
                psu_total: res.total_psu(),
                ssu_total: res.total_ssu(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DesignParams, PrecisionConstraints, PsuRecord, RhoRow, StrataTable, StratumInfo};

    fn inputs(rho_nsr: f64) -> DesignInputs {
        let strata = StrataTable {
            strata: vec![StratumInfo {
                id: "A".into(),
                pop: 20_000,
                means: vec![10.0],
                stdevs: vec![5.0],
                cost: 1.0,
                census: false,
                domains: vec!["POP".into()],
            }],
            n_vars: 1,
            n_domain_types: 1,
        };
        let psus = (0..40)
            .map(|i| PsuRecord {
                id: format!("p{i:02}"),
                stratum: "A".into(),
                mos: 500,
            })
            .collect();
        DesignInputs {
            strata,
            constraints: vec![PrecisionConstraints { domain: "POP".into(), cvs: vec![0.03] }],
            psus: Some(psus),
            design: Some(vec![DesignParams { stratum: "A".into(), delta: 1.0, minimum: 10 }]),
            rho: Some(vec![RhoRow {
                stratum: "A".into(),
                rho_sr: vec![1.0],
                rho_nsr: vec![rho_nsr],
            }]),
            deft: None,
            effst: None,
        }
    }

    #[test]
    fn degenerate_grid_is_a_single_row() {
        let rows = sensitivity_min_ssu(&inputs(0.02), &TwoStageOptions::default(), 40, 40, 7).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].minimum, 40);
    }

    #[test]
    fn even_grid_has_distinct_rounded_points() {
        let rows = sensitivity_min_ssu(&inputs(0.02), &TwoStageOptions::default(), 30, 80, 10).unwrap();
        let minima: Vec<u64> = rows.iter().map(|r| r.minimum).collect();
        assert_eq!(minima.len(), 10);
        assert!(minima.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*minima.first().unwrap(), 30);
        assert_eq!(*minima.last().unwrap(), 80);
    }

    #[test]
    fn zero_correlation_keeps_ssu_flat_while_psus_shrink() {
        let rows = sensitivity_min_ssu(&inputs(0.0), &TwoStageOptions::default(), 10, 60, 6).unwrap();
        let ssu: Vec<u64> = rows.iter().map(|r| r.ssu_total).collect();
        assert!(ssu.windows(2).all(|w| w[0] == w[1]), "{ssu:?}");
        let psu: Vec<u64> = rows.iter().map(|r| r.psu_total).collect();
        assert!(psu.windows(2).all(|w| w[0] >= w[1]), "{psu:?}");
    }

    #[test]
    fn positive_correlation_makes_ssu_grow_with_the_floor() {
        let rows = sensitivity_min_ssu(&inputs(0.05), &TwoStageOptions::default(), 10, 80, 5).unwrap();
        assert!(
            rows.last().unwrap().ssu_total > rows.first().unwrap().ssu_total,
            "{rows:?}"
        );
    }
}
