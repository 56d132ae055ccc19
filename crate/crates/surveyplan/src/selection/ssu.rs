//! Second-stage selection: final-stage units inside each selected PSU,
//! by circular systematic sampling with a fractional step.
//!
//! A random start u in [0, M) and step M/n give positions
//! floor((u + k·M/n) mod M) for k = 0..n. Because the step is at least 1
//! whenever n ≤ M, the n positions are distinct, and every unit's
//! inclusion probability is exactly n/M — no rounding of the step, which
//! is what keeps the design weights exact.

use log::warn;
use rand::Rng;

use super::psu::SelectedPsu;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::rng;

/// One selected final-stage unit with its selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedSsu {
    /// Row index into the frame the unit came from.
    pub row: usize,
    pub psu_id: String,
    /// First-stage (PSU) inclusion probability.
    pub prob_1st: f64,
    /// Second-stage probability n/M within the PSU.
    pub prob_2st: f64,
    /// Product of the two stages.
    pub prob: f64,
    /// Design weight 1/prob.
    pub weight: f64,
}

/// Positions selected by a circular systematic pass over `m` units.
/// Requires 1 ≤ n ≤ m; the result is sorted and free of duplicates.
pub fn systematic_positions<R: Rng>(m: usize, n: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(n >= 1 && n <= m);
    let step = m as f64 / n as f64;
    let start: f64 = rng.random_range(0.0..m as f64);
    let mut pos: Vec<usize> = (0..n)
        .map(|k| {
            let x = (start + k as f64 * step) % m as f64;
            (x.floor() as usize).min(m - 1)
        })
        .collect();
    pos.sort_unstable();
    pos.dedup();
    debug_assert_eq!(pos.len(), n, "circular systematic positions must be distinct");
    pos
}

/// Draw the final-stage units for every selected PSU.
///
/// Each PSU gets its own random stream keyed by its id, so adding or
/// removing PSUs never perturbs the draws inside the others. When the
/// frame holds fewer units than the plan asks for, the whole PSU is
/// taken and a warning records the disagreement with the size measure.
pub fn select_ssu(frame: &Frame, psus: &[SelectedPsu], seed: u64) -> Result<Vec<SelectedSsu>> {
    let mut out = Vec::new();
    for p in psus {
        let rows = frame.by_psu.get(&p.psu_id).ok_or_else(|| {
            Error::Reference(format!("PSU {} has no units in the frame", p.psu_id))
        })?;
        let m = rows.len();
        let mut n = p.ssu_to_select as usize;
        if n > m {
            warn!(
                "PSU {}: plan asks for {n} units but the frame holds {m}; taking all",
                p.psu_id
            );
            n = m;
        }
        if n == 0 {
            continue;
        }
        let prob_2st = n as f64 / m as f64;
        let weight = 1.0 / (p.pik * prob_2st);
        let mut prng = rng::stream(seed, "ssu", &p.psu_id);
        for k in systematic_positions(m, n, &mut prng) {
            out.push(SelectedSsu {
                row: rows[k],
                psu_id: p.psu_id.clone(),
                prob_1st: p.pik,
                prob_2st,
                prob: p.pik * prob_2st,
                weight,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{synth_frame, SynthSpec};
    use crate::rng::stream;

    #[test]
    fn integer_step_picks_every_second_unit() {
        let mut rng = stream(3, "test", "step");
        for _ in 0..50 {
            let pos = systematic_positions(10, 5, &mut rng);
            assert_eq!(pos.len(), 5);
            // Start s in [0,10), step 2: either the evens or the odds
            // shifted by the start's parity class.
            let parity = pos[0] % 2;
            assert!(pos.iter().all(|&p| p % 2 == parity), "{pos:?}");
        }
    }

    #[test]
    fn fractional_step_still_yields_distinct_positions() {
        let mut rng = stream(4, "test", "frac");
        for m in 1..=40usize {
            for n in 1..=m {
                let pos = systematic_positions(m, n, &mut rng);
                assert_eq!(pos.len(), n, "m={m} n={n}");
                assert!(pos.iter().all(|&p| p < m));
                assert!(pos.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn taking_everything_is_the_identity() {
        let mut rng = stream(5, "test", "all");
        let pos = systematic_positions(7, 7, &mut rng);
        assert_eq!(pos, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn inclusion_is_uniform_across_positions() {
        // Every unit should come up n/m of the time: m=8, n=3 over many
        // draws, each within four standard errors of 0.375.
        let mut rng = stream(6, "test", "unif");
        let (m, n, reps) = (8usize, 3usize, 40_000);
        let mut hits = vec![0u32; m];
        for _ in 0..reps {
            for p in systematic_positions(m, n, &mut rng) {
                hits[p] += 1;
            }
        }
        let want = n as f64 / m as f64;
        let se = (want * (1.0 - want) / reps as f64).sqrt();
        for (p, &h) in hits.iter().enumerate() {
            let got = h as f64 / reps as f64;
            assert!((got - want).abs() < 4.0 * se, "position {p}: {got} vs {want}");
        }
    }

    fn fake_psu(id: &str, pik: f64, ssu: u64, mos: u64) -> SelectedPsu {
        SelectedPsu {
            psu_id: id.into(),
            stratum: "S1".into(),
            substratum: "S1-G1".into(),
            mos,
            sr: pik == 1.0,
            pik,
            ssu_to_select: ssu,
            weight_1st: 1.0 / pik,
            weight_2st: mos as f64 / ssu as f64,
            weight: mos as f64 / (pik * ssu as f64),
        }
    }

    #[test]
    fn weights_invert_the_two_stage_probabilities_exactly() {
        let spec = SynthSpec {
            strata: 1,
            psus_per_stratum: 4,
            units_per_psu: (20, 30),
            binary_vars: 1,
            quant_vars: 0,
            psu_effect: 0.0,
            domains: 1,
        };
        let frame = synth_frame(&spec, 8);
        let psu_id = frame.by_psu.keys().next().unwrap().clone();
        let m = frame.by_psu[&psu_id].len() as u64;
        let sel = select_ssu(&frame, &[fake_psu(&psu_id, 0.25, 10, m)], 9).unwrap();
        assert_eq!(sel.len(), 10);
        for u in &sel {
            assert_eq!(u.prob_1st, 0.25);
            assert_eq!(u.prob_2st, 10.0 / m as f64);
            assert!((u.weight * u.prob - 1.0).abs() < 1e-12);
        }
        // Sum of weights over the PSU inverts to M/pik exactly.
        let total: f64 = sel.iter().map(|u| u.weight).sum();
        assert!((total - m as f64 / 0.25).abs() < 1e-9);
    }

    #[test]
    fn certainty_psu_taken_completely_reproduces_its_population() {
        let spec = SynthSpec {
            strata: 1,
            psus_per_stratum: 2,
            units_per_psu: (15, 15),
            binary_vars: 1,
            quant_vars: 0,
            psu_effect: 0.0,
            domains: 1,
        };
        let frame = synth_frame(&spec, 10);
        let psus: Vec<SelectedPsu> = frame
            .by_psu
            .keys()
            .map(|id| fake_psu(id, 1.0, 15, 15))
            .collect();
        let sel = select_ssu(&frame, &psus, 11).unwrap();
        assert_eq!(sel.len(), frame.len());
        assert!(sel.iter().all(|u| u.weight == 1.0));
        // Every row exactly once.
        let mut rows: Vec<usize> = sel.iter().map(|u| u.row).collect();
        rows.sort_unstable();
        assert_eq!(rows, (0..frame.len()).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_psu_is_a_reference_error_and_overdraw_takes_all() {
        let spec = SynthSpec {
            strata: 1,
            psus_per_stratum: 1,
            units_per_psu: (5, 5),
            binary_vars: 1,
            quant_vars: 0,
            psu_effect: 0.0,
            domains: 1,
        };
        let frame = synth_frame(&spec, 12);
        let err = select_ssu(&frame, &[fake_psu("NOWHERE", 1.0, 2, 5)], 1).unwrap_err();
        assert!(err.to_string().contains("no units in the frame"), "{err}");

        let psu_id = frame.by_psu.keys().next().unwrap().clone();
        let sel = select_ssu(&frame, &[fake_psu(&psu_id, 1.0, 9, 5)], 1).unwrap();
        assert_eq!(sel.len(), 5);
        assert!(sel.iter().all(|u| u.prob_2st == 1.0));
    }

    #[test]
    fn same_seed_same_units() {
        let frame = synth_frame(&SynthSpec::default(), 13);
        let psu_id = frame.by_psu.keys().nth(3).unwrap().clone();
        let m = frame.by_psu[&psu_id].len() as u64;
        let p = [fake_psu(&psu_id, 0.5, 7, m)];
        assert_eq!(select_ssu(&frame, &p, 77).unwrap(), select_ssu(&frame, &p, 77).unwrap());
        assert_ne!(select_ssu(&frame, &p, 77).unwrap(), select_ssu(&frame, &p, 78).unwrap());
    }
}
