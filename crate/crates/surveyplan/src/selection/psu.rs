//! First-stage selection: which PSUs enter the sample, with what
//! probability, and how many final-stage units each must contribute.

use log::warn;

use super::sampford::{pps_inclusion, resolve_certainties, sampford_select};
use super::substrata::{build_substrata, SubStratum};
use crate::error::{Error, Result};
use crate::model::{DesignParams, PsuRecord, StrataTable};
use crate::rng;
use crate::twostage::{stratum_states, TwoStageState};

/// One PSU of the universe, annotated with its role in the design.
#[derive(Debug, Clone, PartialEq)]
pub struct UniversePsu {
    pub psu_id: String,
    pub stratum: String,
    /// Sub-stratum the PSU belongs to: its own `-SR<k>` singleton when it
    /// is taken outright, a shared `-G<k>` draw group otherwise.
    pub substratum: String,
    pub mos: u64,
    /// Enters the sample with certainty (size above the threshold, a
    /// promoted certainty inside its group, or part of a census stratum).
    pub sr: bool,
    /// First-stage inclusion probability.
    pub pik: f64,
    pub selected: bool,
}

/// One selected PSU with its second-stage workload and design weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPsu {
    pub psu_id: String,
    pub stratum: String,
    pub substratum: String,
    pub mos: u64,
    pub sr: bool,
    pub pik: f64,
    /// Final-stage units to draw inside this PSU.
    pub ssu_to_select: u64,
    /// 1/pik.
    pub weight_1st: f64,
    /// mos / ssu_to_select: the inverse second-stage fraction.
    pub weight_2st: f64,
    /// Product of the two stages.
    pub weight: f64,
}

/// Per-stratum tallies of the realised first stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumPsuStats {
    pub stratum: String,
    pub psu: u64,
    pub psu_sr: u64,
    pub psu_nsr: u64,
    pub ssu: u64,
    pub ssu_sr: u64,
    pub ssu_nsr: u64,
}

/// The realised first stage: every PSU annotated, the drawn sample, the
/// per-stratum tallies and the threshold split that produced them.
#[derive(Debug, Clone)]
pub struct PsuSelection {
    pub universe: Vec<UniversePsu>,
    pub sample: Vec<SelectedPsu>,
    pub stats: Vec<StratumPsuStats>,
    pub states: Vec<TwoStageState>,
    pub substrata: Vec<SubStratum>,
}

impl PsuSelection {
    /// Column-wise sum of the per-stratum tallies.
    pub fn totals(&self) -> StratumPsuStats {
        let mut t = StratumPsuStats {
            stratum: "Total".to_string(),
            psu: 0,
            psu_sr: 0,
            psu_nsr: 0,
            ssu: 0,
            ssu_sr: 0,
            ssu_nsr: 0,
        };
        for s in &self.stats {
            t.psu += s.psu;
            t.psu_sr += s.psu_sr;
            t.psu_nsr += s.psu_nsr;
            t.ssu += s.ssu;
            t.ssu_sr += s.ssu_sr;
            t.ssu_nsr += s.ssu_nsr;
        }
        t
    }
}

/// Number of final-stage units to interview in one selected PSU: the
/// stratum's share, floored at the per-PSU minimum and capped at the
/// PSU's own size.
fn ssu_share(raw: f64, minimum: u64, mos: u64) -> u64 {
    let share = (raw - 1e-9).ceil().max(0.0) as u64;
    share.max(minimum).min(mos)
}

/// Select the first stage under a final allocation.
///
/// PSUs above the size threshold enter as certainties and take their
/// proportional share of the stratum's allocation. The rest are grouped
/// into sub-strata of comparable cumulated size; each group contributes
/// a fixed number of PSUs drawn proportional to size (with oversized
/// units promoted to certainties), and each drawn PSU takes an equal
/// share of the sampled part's allocation. Census strata enumerate every
/// PSU completely. The draw for a group depends only on the seed and the
/// group's label, so results do not depend on thread count or ordering.
pub fn select_psu(
    strata: &StrataTable,
    psus: &[PsuRecord],
    design: &[DesignParams],
    alloc: &[u64],
    min_psu_strat: u64,
    seed: u64,
) -> Result<PsuSelection> {
    let design_pairs = crate::twostage::algorithm::align_design(strata, design)?;
    let mos_by = crate::twostage::algorithm::group_mos(strata, psus)?;
    let states = stratum_states(strata, &mos_by, &design_pairs, alloc, min_psu_strat)?;

    // PSU records per stratum, in input order.
    let mut recs_by: Vec<Vec<&PsuRecord>> = vec![Vec::new(); strata.len()];
    for p in psus {
        recs_by[strata.index_of(&p.stratum).unwrap()].push(p);
    }

    let mut universe: Vec<Option<UniversePsu>> = vec![None; psus.len()];
    let mut sample = Vec::new();
    let mut stats = Vec::new();
    let mut substrata = Vec::new();
    let mut by_id: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, p) in psus.iter().enumerate() {
        if by_id.insert(p.id.as_str(), i).is_some() {
            return Err(Error::schema(format!("duplicate PSU id {}", p.id)));
        }
    }

    for (h, s) in strata.strata.iter().enumerate() {
        let st = &states[h];
        let recs = &recs_by[h];
        let (_, minimum) = design_pairs[h];
        let f = alloc[h] as f64 / s.pop as f64;
        let mut tally = StratumPsuStats {
            stratum: s.id.clone(),
            psu: 0,
            psu_sr: 0,
            psu_nsr: 0,
            ssu: 0,
            ssu_sr: 0,
            ssu_nsr: 0,
        };

        // Certainty side: everything strictly above the threshold, in
        // decreasing size order (census strata have threshold 0, which
        // sweeps in every PSU and, with f = 1, a complete enumeration).
        let mut sr: Vec<usize> = (0..recs.len())
            .filter(|&i| recs[i].mos as f64 > st.threshold)
            .collect();
        sr.sort_by_key(|&i| (std::cmp::Reverse(recs[i].mos), recs[i].id.clone()));
        for (k, &i) in sr.iter().enumerate() {
            let rec = recs[i];
            let label = format!("{}-SR{}", s.id, k + 1);
            let ssu = ssu_share(f * rec.mos as f64, minimum, rec.mos);
            universe[by_id[rec.id.as_str()]] = Some(UniversePsu {
                psu_id: rec.id.clone(),
                stratum: s.id.clone(),
                substratum: label.clone(),
                mos: rec.mos,
                sr: true,
                pik: 1.0,
                selected: true,
            });
            sample.push(SelectedPsu {
                psu_id: rec.id.clone(),
                stratum: s.id.clone(),
                substratum: label,
                mos: rec.mos,
                sr: true,
                pik: 1.0,
                ssu_to_select: ssu,
                weight_1st: 1.0,
                weight_2st: rec.mos as f64 / ssu as f64,
                weight: rec.mos as f64 / ssu as f64,
            });
            tally.psu += 1;
            tally.psu_sr += 1;
            tally.ssu += ssu;
            tally.ssu_sr += ssu;
        }

        // Sampled side.
        let nsr: Vec<usize> = (0..recs.len())
            .filter(|&i| recs[i].mos as f64 <= st.threshold)
            .collect();
        if st.psu_nsr > 0 && nsr.is_empty() {
            return Err(Error::Infeasible(format!(
                "stratum {}: {} PSUs to draw but none below the threshold",
                s.id, st.psu_nsr
            )));
        }
        if st.psu_nsr == 0 && !nsr.is_empty() {
            warn!(
                "stratum {}: {} PSUs below the threshold receive no draw (allocation fits in the certainty part)",
                s.id,
                nsr.len()
            );
        }
        if st.psu_nsr > 0 {
            let mos: Vec<u64> = nsr.iter().map(|&i| recs[i].mos).collect();
            let groups = build_substrata(&s.id, &mos, st.threshold, st.psu_nsr, min_psu_strat)?;
            let per_psu = st.n_nsr / st.psu_nsr as f64;
            for g in &groups {
                let sizes: Vec<u64> = g.members.iter().map(|&i| mos[i]).collect();
                let (certain, resid_m) = resolve_certainties(&sizes, g.draw);
                let resid_pool: Vec<usize> =
                    (0..sizes.len()).filter(|i| !certain.contains(i)).collect();
                let resid_sizes: Vec<u64> = resid_pool.iter().map(|&i| sizes[i]).collect();
                let pi_resid = pps_inclusion(&resid_sizes, resid_m);
                let mut grng = rng::stream(seed, "psu", &g.label);
                let drawn = sampford_select(&resid_sizes, resid_m, &mut grng)?;

                // Annotate every member of the group.
                for (k, &gi) in g.members.iter().enumerate() {
                    let rec = recs[nsr[gi]];
                    let is_certain = certain.contains(&k);
                    let pik = if is_certain {
                        1.0
                    } else {
                        let pos = resid_pool.iter().position(|&x| x == k).unwrap();
                        pi_resid[pos]
                    };
                    let is_drawn = is_certain
                        || drawn.iter().any(|&d| resid_pool[d] == k);
                    universe[by_id[rec.id.as_str()]] = Some(UniversePsu {
                        psu_id: rec.id.clone(),
                        stratum: s.id.clone(),
                        substratum: g.label.clone(),
                        mos: rec.mos,
                        sr: is_certain,
                        pik,
                        selected: is_drawn,
                    });
                    if is_drawn {
                        let ssu = ssu_share(per_psu, minimum, rec.mos);
                        sample.push(SelectedPsu {
                            psu_id: rec.id.clone(),
                            stratum: s.id.clone(),
                            substratum: g.label.clone(),
                            mos: rec.mos,
                            sr: is_certain,
                            pik,
                            ssu_to_select: ssu,
                            weight_1st: 1.0 / pik,
                            weight_2st: rec.mos as f64 / ssu as f64,
                            weight: (1.0 / pik) * rec.mos as f64 / ssu as f64,
                        });
                        tally.psu += 1;
                        tally.ssu += ssu;
                        if is_certain {
                            tally.psu_sr += 1;
                            tally.ssu_sr += ssu;
                        } else {
                            tally.psu_nsr += 1;
                            tally.ssu_nsr += ssu;
                        }
                    }
                }
            }
            substrata.extend(groups);
        } else {
            // Unreached PSUs still get universe rows.
            for &i in &nsr {
                let rec = recs[i];
                universe[by_id[rec.id.as_str()]] = Some(UniversePsu {
                    psu_id: rec.id.clone(),
                    stratum: s.id.clone(),
                    substratum: format!("{}-G0", s.id),
                    mos: rec.mos,
                    sr: false,
                    pik: 0.0,
                    selected: false,
                });
            }
        }
        stats.push(tally);
    }

    Ok(PsuSelection {
        universe: universe.into_iter().map(Option::unwrap).collect(),
        sample,
        stats,
        states,
        substrata,
    })
}
