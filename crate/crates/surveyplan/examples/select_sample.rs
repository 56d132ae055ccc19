//! Drawing the actual sample: municipalities first, then people.
//!
//! Takes a planned two-stage design and realises it: self-representing
//! municipalities enter outright, the rest are drawn with probability
//! proportional to size (Sampford's method, within size-ordered
//! sub-strata), and final units are drawn by circular systematic sampling
//! inside each selected municipality. Every unit leaves with an exact
//! design weight. Run with
//!
//!     cargo run --example select_sample

use surveyplan::evaluate::estimate_mean;
use surveyplan::frame::{prepare_inputs_scenario1, synth_frame, SynthSpec};
use surveyplan::model::{DesignInputs, PrecisionConstraints};
use surveyplan::selection::{select_psu, select_ssu};
use surveyplan::twostage::{beat_2st, TwoStageOptions};

fn main() -> surveyplan::Result<()> {
    let spec = SynthSpec {
        strata: 3,
        psus_per_stratum: 20,
        units_per_psu: (80, 400),
        binary_vars: 1,
        quant_vars: 1,
        psu_effect: 0.4,
        domains: 1,
    };
    let frame = synth_frame(&spec, 7);
    let prep = prepare_inputs_scenario1(&frame, &[true, false], 1.0, 10, false, None)?;

    // Plan: CV of 4% on the rate, 5% on the amount, for the whole population.
    let inputs = DesignInputs {
        strata: prep.strata.clone(),
        constraints: vec![PrecisionConstraints { domain: "POP".into(), cvs: vec![0.04, 0.05] }],
        psus: Some(prep.psus.clone()),
        design: Some(prep.design.clone()),
        rho: Some(prep.rho.clone()),
        deft: None,
        effst: Some(prep.effst.clone()),
    };
    let plan = beat_2st(&inputs, &TwoStageOptions::default())?;
    let alloc: Vec<u64> = plan.rows.iter().map(|r| r.ssu).collect();
    println!("plan: {} interviews in {} municipalities\n", plan.total_ssu(), plan.total_psu());

    // Stage 1: municipalities.
    let seed = 99;
    let first = select_psu(&prep.strata, &prep.psus, &prep.design, &alloc, 2, seed)?;
    for st in &first.stats {
        println!(
            "  {:>8}: {} municipalities ({} certain, {} drawn), {} interviews",
            st.stratum, st.psu, st.psu_sr, st.psu_nsr, st.ssu
        );
    }

    // Stage 2: people inside them.
    let units = select_ssu(&frame, &first.sample, seed)?;
    println!("\ndrawn: {} units", units.len());

    // The weights are exact inverse inclusion probabilities, so the
    // weighted sample reproduces the frame total up to sampling noise.
    let n = frame.len() as f64;
    let values: Vec<f64> = units.iter().map(|u| frame.targets[1][u.row]).collect();
    let weights: Vec<f64> = units.iter().map(|u| u.weight).collect();
    let weight_total: f64 = weights.iter().sum();
    let est = estimate_mean(&values, &weights, n).unwrap();
    let truth = frame.targets[1].iter().sum::<f64>() / n;
    println!("sum of weights: {weight_total:.0}  (frame has {} units)", frame.len());
    println!("estimated mean amount: {est:.2}   frame mean: {truth:.2}");
    Ok(())
}
