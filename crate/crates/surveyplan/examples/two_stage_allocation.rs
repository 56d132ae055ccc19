//! The clustered design: allocation with design-effect feedback.
//!
//! Interviewing goes through municipalities (PSUs). Big ones enter the
//! sample outright (self-representing); the rest are sampled, which
//! inflates variance by a design effect that itself depends on the
//! workload per PSU — so allocation and design effect have to be solved
//! together, by iteration. This example shows the loop converging and
//! what it settles on. Run with
//!
//!     cargo run --example two_stage_allocation

use surveyplan::model::{
    DesignInputs, DesignParams, PrecisionConstraints, PsuRecord, RhoRow, StrataTable, StratumInfo,
};
use surveyplan::twostage::{beat_2st, TwoStageOptions};

/// Municipality sizes follow a Zipf-like decay: one dominant city, a few
/// towns, many villages. Sizes sum exactly to the stratum population.
fn zipf_psus(stratum: &str, pop: u64, k: usize) -> Vec<PsuRecord> {
    let wsum: f64 = (1..=k).map(|i| 1.0 / i as f64).sum();
    let mut sizes: Vec<u64> = (1..=k)
        .map(|i| ((pop as f64) / (i as f64 * wsum)).floor().max(1.0) as u64)
        .collect();
    let short = pop - sizes.iter().sum::<u64>();
    sizes[0] += short;
    sizes
        .into_iter()
        .enumerate()
        .map(|(i, mos)| PsuRecord {
            id: format!("{stratum}-{:02}", i + 1),
            stratum: stratum.into(),
            mos,
        })
        .collect()
}

fn main() -> surveyplan::Result<()> {
    let specs: [(&str, u64, [f64; 2], [f64; 2]); 3] = [
        ("metro", 310_000, [0.36, 1_520.0], [0.48, 1_010.0]),
        ("towns", 160_000, [0.27, 1_140.0], [0.44, 640.0]),
        ("rural", 95_000, [0.19, 870.0], [0.39, 450.0]),
    ];
    let strata = StrataTable {
        strata: specs
            .iter()
            .map(|(id, pop, means, sds)| StratumInfo {
                id: (*id).into(),
                pop: *pop,
                means: means.to_vec(),
                stdevs: sds.to_vec(),
                cost: 1.0,
                census: false,
                domains: vec!["POP".into()],
            })
            .collect(),
        n_vars: 2,
        n_domain_types: 1,
    };
    let mut psus = Vec::new();
    for (id, pop, ..) in &specs {
        psus.extend(zipf_psus(id, *pop, 40));
    }
    let inputs = DesignInputs {
        strata,
        constraints: vec![PrecisionConstraints { domain: "POP".into(), cvs: vec![0.025, 0.03] }],
        psus: Some(psus),
        design: Some(
            specs
                .iter()
                .map(|(id, ..)| DesignParams { stratum: (*id).into(), delta: 1.0, minimum: 12 })
                .collect(),
        ),
        // Within-municipality homogeneity per variable; the rate clusters
        // weakly, the money amount strongly.
        rho: Some(
            specs
                .iter()
                .map(|(id, ..)| RhoRow {
                    stratum: (*id).into(),
                    rho_sr: vec![1.0, 1.0],
                    rho_nsr: vec![0.03, 0.09],
                })
                .collect(),
        ),
        deft: None,
        effst: None,
    };

    let res = beat_2st(&inputs, &TwoStageOptions::default())?;

    println!("{:>5} {:>7} {:>8}", "iter", "PSUs", "units");
    for it in &res.iterations {
        println!("{:>5} {:>7} {:>8}   (self-rep {})", it.iteration, it.psu_total, it.ssu_total, it.psu_sr);
    }
    println!(
        "\nconverged: {} — iteration 0 is the element-sampling solve, before\nany design-effect inflation\n",
        res.converged
    );

    println!("{:>7} {:>7} {:>7} {:>7} {:>11}", "stratum", "units", "SR", "drawn", "threshold");
    for row in &res.rows {
        println!(
            "{:>7} {:>7} {:>7} {:>7} {:>11.0}",
            row.stratum, row.ssu, row.psu_sr, row.psu_nsr, row.threshold
        );
    }

    if let Some(last) = res.deft_trace.last() {
        println!("\nfinal design effects (deft) at iteration {}:", last.iteration);
        for row in res.deft_trace.iter().filter(|r| r.iteration == last.iteration) {
            let d: Vec<String> = row.deft.iter().map(|v| format!("{v:.3}")).collect();
            println!("  {:>7}: {}", row.stratum, d.join("  "));
        }
    }
    Ok(())
}
