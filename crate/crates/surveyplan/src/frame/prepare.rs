//! Build the full set of allocator inputs from a unit-level register
//! (every target value observed on every unit).

use log::warn;

use super::stats::stratum_stats_register;
use super::Frame;
use crate::error::{Error, Result};
use crate::model::{
    DeftRow, DesignParams, EffstRow, PsuRecord, RhoRow, StrataTable, StratumInfo,
};
use crate::twostage::{deff_simple, rho_from_population};

/// Everything `prepare` produces: the stratum table plus the auxiliary
/// tables a two-stage allocation needs.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub strata: StrataTable,
    pub psus: Vec<PsuRecord>,
    pub design: Vec<DesignParams>,
    pub rho: Vec<RhoRow>,
    pub effst: Vec<EffstRow>,
    /// Suggested starting design-effect factors, present when requested.
    pub deft: Option<Vec<DeftRow>>,
}

/// Derive allocator inputs from a register frame.
///
/// Per stratum and variable the mean and population standard deviation
/// come straight from the register (divisor N). Variables flagged binary
/// must contain only 0/1 values; their variance then reduces to p(1-p),
/// which the register formula already yields. Intra-cluster correlations
/// for the non-self-representing side come out of the within/between
/// deviance split over the stratum's PSUs — or over `clusters` when a
/// different grouping variable drives the design effect; the
/// self-representing side is set to its worst case of 1. Estimator
/// effects start at 1 (no estimator chosen yet), and the optional `deft`
/// table holds sqrt(1 + rho·(minimum·delta - 1)) as a first-iteration
/// hint for the planned cluster take.
pub fn prepare_inputs_scenario1(
    frame: &Frame,
    binary: &[bool],
    delta: f64,
    minimum: u64,
    suggest_deft: bool,
    clusters: Option<&[String]>,
) -> Result<PreparedInputs> {
    let n_vars = frame.targets.len();
    if n_vars == 0 {
        return Err(Error::invalid("no target variables designated"));
    }
    if binary.len() != n_vars {
        return Err(Error::invalid(format!(
            "{} binary flags for {} target variables",
            binary.len(),
            n_vars
        )));
    }
    if let Some(c) = clusters {
        if c.len() != frame.len() {
            return Err(Error::invalid(format!(
                "{} cluster labels for {} frame rows",
                c.len(),
                frame.len()
            )));
        }
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive (got {delta})")));
    }
    if minimum < 1 {
        return Err(Error::invalid("minimum SSUs per PSU must be at least 1"));
    }

    let mut strata = Vec::new();
    let mut psus = Vec::new();
    let mut design = Vec::new();
    let mut rho = Vec::new();
    let mut effst = Vec::new();
    let mut deft = Vec::new();

    for sid in &frame.strata_order {
        let rows: Vec<usize> = (0..frame.len()).filter(|&i| &frame.stratum[i] == sid).collect();

        // The stratum's domain category must be unambiguous: domains are
        // unions of whole strata, so a stratum straddling two categories
        // cannot be expressed downstream.
        let dom = match &frame.domain {
            None => "POP".to_string(),
            Some(col) => {
                let first = &col[rows[0]];
                if let Some(&bad) = rows.iter().find(|&&i| &col[i] != first) {
                    return Err(Error::schema(format!(
                        "stratum {sid} spans domain categories {} and {}",
                        first, col[bad]
                    )));
                }
                first.clone()
            }
        };

        let mut means = Vec::with_capacity(n_vars);
        let mut stdevs = Vec::with_capacity(n_vars);
        let mut rho_nsr = Vec::with_capacity(n_vars);
        let mut deft_row = Vec::with_capacity(n_vars);

        let labels: Vec<&str> = rows
            .iter()
            .map(|&i| clusters.map_or(frame.psu_id[i].as_str(), |c| c[i].as_str()))
            .collect();
        let n_clusters = {
            let mut ids: Vec<&&str> = labels.iter().collect();
            ids.sort();
            ids.dedup();
            ids.len()
        };

        for j in 0..n_vars {
            let values: Vec<f64> = rows.iter().map(|&i| frame.targets[j][i]).collect();
            if binary[j] {
                if let Some(&v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::invalid(format!(
                        "variable {} is flagged binary but stratum {sid} contains {v}",
                        j + 1
                    )));
                }
            }
            let m = stratum_stats_register(&values)?;
            means.push(m.mean);
            stdevs.push(m.sd());

            let r = if n_clusters < 2 {
                warn!("stratum {sid}: single cluster, intra-cluster correlation set to 0");
                0.0
            } else {
                match rho_from_population(&labels, &values) {
                    Ok(r) => r,
                    Err(_) => {
                        warn!(
                            "stratum {sid}, variable {}: constant values, correlation set to 0",
                            j + 1
                        );
                        0.0
                    }
                }
            };
            rho_nsr.push(r);
            deft_row.push(deff_simple(r, minimum as f64 * delta).sqrt());
        }

        strata.push(StratumInfo {
            id: sid.clone(),
            pop: rows.len() as u64,
            means,
            stdevs,
            cost: 1.0,
            census: false,
            domains: vec![dom],
        });
        for (psu, idx) in &frame.by_psu {
            if &frame.stratum[idx[0]] == sid {
                psus.push(PsuRecord { id: psu.clone(), stratum: sid.clone(), mos: idx.len() as u64 });
            }
        }
        design.push(DesignParams { stratum: sid.clone(), delta, minimum });
        rho.push(RhoRow {
            stratum: sid.clone(),
            rho_sr: vec![1.0; n_vars],
            rho_nsr,
        });
        effst.push(EffstRow { stratum: sid.clone(), effst: vec![1.0; n_vars] });
        deft.push(DeftRow { stratum: sid.clone(), deft: deft_row });
    }

    Ok(PreparedInputs {
        strata: StrataTable { strata, n_vars, n_domain_types: 1 },
        psus,
        design,
        rho,
        effst,
        deft: suggest_deft.then_some(deft),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::synth::{synth_frame, SynthSpec};

    fn spec() -> SynthSpec {
        SynthSpec {
            strata: 3,
            psus_per_stratum: 5,
            units_per_psu: (40, 80),
            binary_vars: 1,
            quant_vars: 1,
            psu_effect: 1.0,
            domains: 2,
        }
    }

    #[test]
    fn tables_cover_every_stratum_and_agree_with_the_frame() {
        let frame = synth_frame(&spec(), 5);
        let p = prepare_inputs_scenario1(&frame, &[true, false], 1.0, 20, true, None).unwrap();
        assert_eq!(p.strata.len(), 3);
        assert_eq!(p.strata.n_vars, 2);
        assert_eq!(p.strata.total_pop() as usize, frame.len());
        assert_eq!(p.psus.len(), 15);
        // PSU sizes add back up to the stratum population.
        for s in &p.strata.strata {
            let mos: u64 = p.psus.iter().filter(|r| r.stratum == s.id).map(|r| r.mos).sum();
            assert_eq!(mos, s.pop);
            // Binary variable: variance is exactly p(1-p).
            let pj = s.means[0];
            assert!((s.stdevs[0] * s.stdevs[0] - pj * (1.0 - pj)).abs() < 1e-12);
            assert_eq!(s.domains, vec![if s.id == "S2" { "D2" } else { "D1" }]);
        }
        for r in &p.rho {
            assert_eq!(r.rho_sr, vec![1.0, 1.0]);
            assert!(r.rho_nsr.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert!(p.effst.iter().all(|e| e.effst == vec![1.0, 1.0]));
        // Suggested factor encodes the planned take of minimum*delta units.
        let d = p.deft.as_ref().unwrap();
        for (r, dr) in p.rho.iter().zip(d) {
            for j in 0..2 {
                let want = (1.0 + r.rho_nsr[j] * (20.0 - 1.0)).sqrt();
                assert!((dr.deft[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_binary_values_in_a_flagged_column_are_rejected() {
        let frame = synth_frame(&spec(), 5);
        let err = prepare_inputs_scenario1(&frame, &[false, true], 1.0, 20, false, None).unwrap_err();
        assert!(err.to_string().contains("flagged binary"), "{err}");
    }

    #[test]
    fn single_psu_stratum_gets_zero_correlation() {
        let frame = synth_frame(
            &SynthSpec { strata: 1, psus_per_stratum: 1, units_per_psu: (30, 30), ..spec() },
            9,
        );
        let p = prepare_inputs_scenario1(&frame, &[true, false], 1.0, 10, false, None).unwrap();
        assert_eq!(p.rho[0].rho_nsr, vec![0.0, 0.0]);
    }

    #[test]
    fn stratum_spanning_two_domain_categories_is_a_schema_error() {
        let mut frame = synth_frame(&spec(), 5);
        frame.domain.as_mut().unwrap()[0] = "ELSEWHERE".into();
        let err = prepare_inputs_scenario1(&frame, &[true, false], 1.0, 20, false, None).unwrap_err();
        assert!(err.to_string().contains("spans domain categories"), "{err}");
    }
}
