//! Cost-minimal allocation under CV ceilings on several estimates at once.
//!
//! Six strata, two target variables (a rate and a money amount), two
//! overlapping domain structures: the whole population and a two-region
//! split. The solver finds the cheapest integer allocation whose expected
//! coefficients of variation stay under every ceiling, which no single
//! textbook formula covers. Run with
//!
//!     cargo run --example one_stage_allocation

use surveyplan::allocation::{beat_1st, OneStageOptions};
use surveyplan::model::{PrecisionConstraints, StrataTable, StratumInfo};

fn stratum(id: &str, pop: u64, means: [f64; 2], sds: [f64; 2], region: &str) -> StratumInfo {
    StratumInfo {
        id: id.into(),
        pop,
        means: means.to_vec(),
        stdevs: sds.to_vec(),
        cost: 1.0,
        census: false,
        domains: vec!["POP".into(), region.into()],
    }
}

fn main() -> surveyplan::Result<()> {
    let strata = StrataTable {
        strata: vec![
            stratum("N-urban", 48_000, [0.32, 1_450.0], [0.47, 920.0], "north"),
            stratum("N-rural", 21_500, [0.18, 1_080.0], [0.38, 560.0], "north"),
            stratum("N-coast", 9_800, [0.24, 1_260.0], [0.43, 700.0], "north"),
            stratum("S-urban", 62_000, [0.41, 1_690.0], [0.49, 1_150.0], "south"),
            stratum("S-rural", 33_400, [0.22, 990.0], [0.41, 510.0], "south"),
            stratum("S-coast", 14_100, [0.29, 1_380.0], [0.45, 830.0], "south"),
        ],
        n_vars: 2,
        n_domain_types: 2,
    };
    // One row per domain type: the reserved label DOM<t> applies the
    // ceilings to every category of that type.
    let precision = vec![
        PrecisionConstraints { domain: "DOM1".into(), cvs: vec![0.02, 0.02] },
        PrecisionConstraints { domain: "DOM2".into(), cvs: vec![0.03, 0.035] },
    ];

    let res = beat_1st(&strata, &precision, &OneStageOptions::default())?;

    println!("{:>8} {:>8} {:>7} {:>7} {:>7}", "stratum", "N", "alloc", "prop", "equal");
    for (h, row) in res.rows.iter().enumerate() {
        println!(
            "{:>8} {:>8} {:>7} {:>7} {:>7}",
            row.stratum, strata.strata[h].pop, row.ssu, res.alloc_prop[h], res.alloc_equal[h]
        );
    }
    println!("total: {} units\n", res.total_ssu());

    println!("expected vs planned CV:");
    for (exp, plan) in res.expected_cv.iter().zip(&res.planned_cv) {
        println!(
            "  {:>6}:  V1 {:.4}/{:.4}   V2 {:.4}/{:.4}",
            exp.domain, exp.cvs[0], plan.cvs[0], exp.cvs[1], plan.cvs[1]
        );
    }

    // Which ceiling is worth buying out? Relaxing an active one by 10%
    // shrinks the sample; relaxing a slack one changes nothing.
    println!("\nunits saved if one ceiling is relaxed by 10%:");
    for s in &res.sensitivity {
        if s.delta_n != 0 {
            println!("  {} / V{}: {:+}", s.domain, s.var, s.delta_n);
        }
    }
    Ok(())
}
