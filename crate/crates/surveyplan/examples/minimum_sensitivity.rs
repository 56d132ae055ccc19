//! How the per-PSU workload floor trades interviewer travel for sample size.
//!
//! Raising the minimum number of interviews per selected municipality
//! concentrates fieldwork in fewer places (cheaper logistics) but makes
//! the sample more clustered, so more interviews are needed for the same
//! precision. This example sweeps the floor and prints both totals so the
//! planner can pick a point on the curve. Run with
//!
//!     cargo run --example minimum_sensitivity

use surveyplan::model::{
    DesignInputs, DesignParams, PrecisionConstraints, PsuRecord, RhoRow, StrataTable, StratumInfo,
};
use surveyplan::twostage::{sensitivity_min_ssu, TwoStageOptions};

fn main() -> surveyplan::Result<()> {
    let pops: [(&str, u64); 2] = [("east", 180_000, ), ("west", 240_000)];
    let strata = StrataTable {
        strata: pops
            .iter()
            .map(|(id, pop)| StratumInfo {
                id: (*id).into(),
                pop: *pop,
                means: vec![0.30],
                stdevs: vec![0.458],
                cost: 1.0,
                census: false,
                domains: vec!["POP".into()],
            })
            .collect(),
        n_vars: 1,
        n_domain_types: 1,
    };
    // 50 PSUs per stratum, sizes decaying linearly from city to village;
    // the rounding shortfall goes to the city so sizes sum exactly to N.
    let mut psus = Vec::new();
    for (id, pop) in &pops {
        let k = 50u64;
        let wsum: u64 = (1..=k).sum();
        let mut sizes: Vec<u64> = (1..=k).map(|i| ((k + 1 - i) * pop) / wsum).collect();
        sizes[0] += pop - sizes.iter().sum::<u64>();
        for (i, mos) in sizes.into_iter().enumerate() {
            psus.push(PsuRecord { id: format!("{id}-{:02}", i + 1), stratum: (*id).into(), mos });
        }
    }
    let inputs = DesignInputs {
        strata,
        constraints: vec![PrecisionConstraints { domain: "POP".into(), cvs: vec![0.02] }],
        psus: Some(psus),
        design: Some(
            pops.iter()
                .map(|(id, _)| DesignParams { stratum: (*id).into(), delta: 1.0, minimum: 8 })
                .collect(),
        ),
        rho: Some(
            pops.iter()
                .map(|(id, _)| RhoRow { stratum: (*id).into(), rho_sr: vec![1.0], rho_nsr: vec![0.05] })
                .collect(),
        ),
        deft: None,
        effst: None,
    };

    let rows = sensitivity_min_ssu(&inputs, &TwoStageOptions::default(), 4, 32, 8)?;

    println!("{:>8} {:>6} {:>8}", "minimum", "PSUs", "units");
    for r in &rows {
        println!("{:>8} {:>6} {:>8}", r.minimum, r.psu_total, r.ssu_total);
    }
    println!("\nfewer municipalities, more interviews: pick your trade.");
    Ok(())
}
