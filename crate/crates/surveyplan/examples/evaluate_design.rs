//! Does the plan deliver? Monte Carlo check against the frame.
//!
//! The allocator promises coefficients of variation under the planned
//! ceilings, but those rest on model assumptions (the homogeneity
//! figures, the design-effect iteration). Drawing the whole two-stage
//! sample a few hundred times from the frame and measuring the scatter of
//! the estimates checks the promise empirically, per domain. Run with
//!
//!     cargo run --example evaluate_design

use surveyplan::evaluate::{eval_2stage, EvalOptions};
use surveyplan::frame::{prepare_inputs_scenario1, synth_frame, SynthSpec};
use surveyplan::model::{DesignInputs, PrecisionConstraints};
use surveyplan::twostage::{beat_2st, TwoStageOptions};

fn main() -> surveyplan::Result<()> {
    let spec = SynthSpec {
        strata: 4,
        psus_per_stratum: 16,
        units_per_psu: (100, 500),
        binary_vars: 1,
        quant_vars: 1,
        psu_effect: 0.3,
        domains: 2,
    };
    let frame = synth_frame(&spec, 11);
    let prep = prepare_inputs_scenario1(&frame, &[true, false], 1.0, 10, false, None)?;

    let planned = vec![PrecisionConstraints { domain: "DOM1".into(), cvs: vec![0.05, 0.05] }];
    let inputs = DesignInputs {
        strata: prep.strata.clone(),
        constraints: planned.clone(),
        psus: Some(prep.psus.clone()),
        design: Some(prep.design.clone()),
        rho: Some(prep.rho.clone()),
        deft: None,
        effst: Some(prep.effst.clone()),
    };
    let plan = beat_2st(&inputs, &TwoStageOptions::default())?;
    let alloc: Vec<u64> = plan.rows.iter().map(|r| r.ssu).collect();
    println!(
        "plan: {} interviews in {} municipalities, ceilings 5% on both variables\n",
        plan.total_ssu(),
        plan.total_psu()
    );

    let opts = EvalOptions { nsampl: 400, redraw_psu: true, min_psu_strat: 2, seed: 4711 };
    let rep = eval_2stage(&frame, &prep.strata, &prep.psus, &prep.design, &alloc, &opts)?;

    println!("empirical CV over {} full two-stage redraws:", rep.nsampl);
    for row in &rep.rows {
        let planned_cv = plan
            .expected_cv
            .iter()
            .find(|c| c.domain == row.domain)
            .map(|c| format!("  (allocator expected {:.4} / {:.4})", c.cvs[0], c.cvs[1]))
            .unwrap_or_default();
        println!(
            "  {:>6} (N={:>6}): {:.4}  {:.4}{planned_cv}",
            row.domain, row.pop, row.cv[0], row.cv[1]
        );
    }
    println!("\nestimates are unbiased; compare means to the frame truth:");
    for row in &rep.rows {
        println!(
            "  {:>6}: rate {:.4} vs {:.4}   amount {:.1} vs {:.1}",
            row.domain, row.mean[0], row.pop_mean[0], row.mean[1], row.pop_mean[1]
        );
    }
    Ok(())
}
