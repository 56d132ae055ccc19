//! The whole workflow through CSV files, exactly as the CLI drives it.
//!
//! Frame in, sample out: prepare planning inputs from the frame, check
//! them, solve the two-stage allocation, draw municipalities and people,
//! and verify the realised precision — with every intermediate artifact
//! round-tripping through files in a scratch directory, the same files
//! the `surveyplan` binary reads and writes. Run with
//!
//!     cargo run --example full_pipeline

use surveyplan::evaluate::{eval_2stage, EvalOptions};
use surveyplan::frame::{load_frame, prepare_inputs_scenario1, synth_frame, FrameColumns, SynthSpec};
use surveyplan::model::{
    check_input, load_inputs, load_psus, load_strata, write_csv, InputPaths,
};
use surveyplan::report;
use surveyplan::selection::{select_psu, select_ssu};
use surveyplan::twostage::{beat_2st, TwoStageOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let dir = dir.path();
    let seed = 31;

    // A register frame lands on disk, as it would arrive from outside.
    let spec = SynthSpec {
        strata: 3,
        psus_per_stratum: 18,
        units_per_psu: (100, 450),
        binary_vars: 1,
        quant_vars: 1,
        psu_effect: 0.35,
        domains: 1,
    };
    let frame_path = dir.join("frame.csv");
    synth_frame(&spec, seed).write(&frame_path)?;

    // prepare: frame -> strata / PSU / design / homogeneity tables.
    let cols = FrameColumns {
        unit_id: "ID".into(),
        psu_id: "PSU_ID".into(),
        stratum: "STRATUM".into(),
        targets: vec!["B1".into(), "Y1".into()],
        domain: Some("DOM".into()),
        weight: None,
    };
    let frame = load_frame(&frame_path, &cols)?;
    let prep = prepare_inputs_scenario1(&frame, &[true, false], 1.0, 10, false, None)?;
    report::write_prepared(dir, &prep)?;
    println!("prepared inputs from {} frame units", frame.len());

    // check: the written files agree with each other.
    let strata = load_strata(&dir.join("strata.csv"))?;
    let psus = load_psus(&dir.join("psu_file.csv"))?;
    let rep = check_input(&strata, &psus)?;
    println!("check: coherent = {}", rep.is_coherent());

    // The precision ceilings are the planner's call, not derivable from
    // the frame — write them the way a user would.
    let errors_path = dir.join("errors.csv");
    write_csv(&errors_path, &["DOM", "CV1", "CV2"], &[vec!["POP".into(), "0.05".into(), "0.05".into()]])?;

    // allocate --stages 2
    let inputs = load_inputs(&InputPaths {
        strata: dir.join("strata.csv"),
        errors: errors_path,
        psu: Some(dir.join("psu_file.csv")),
        des: Some(dir.join("des_file.csv")),
        rho: Some(dir.join("rho.csv")),
        deft: None,
        effst: Some(dir.join("effst.csv")),
    })?;
    let plan = beat_2st(&inputs, &TwoStageOptions::default())?;
    report::write_alloc(dir, &plan)?;
    report::write_alloc2(dir, &plan)?;
    report::write_expected_cv(dir, &plan)?;
    println!(
        "allocated {} interviews in {} municipalities (converged: {})",
        plan.total_ssu(),
        plan.total_psu(),
        plan.converged
    );

    // select-psu, from the alloc2 file just written.
    let alloc = report::read_alloc(&dir.join("alloc2.csv"), &inputs.strata)?;
    let first = select_psu(&inputs.strata, &psus, inputs.design.as_ref().unwrap(), &alloc, 2, seed)?;
    report::write_sample_psu(dir, &first)?;
    report::write_universe_psu(dir, &first)?;
    report::write_psu_stats(dir, &first)?;

    // select-ssu, from the sample_PSU file just written.
    let drawn_psus = report::read_sample_psu(&dir.join("sample_PSU.csv"))?;
    let units = select_ssu(&frame, &drawn_psus, seed)?;
    report::write_sample_ssu(dir, &frame, &units)?;
    println!("drew {} municipalities, {} people", drawn_psus.len(), units.len());

    // evaluate: does the realised design hold the planned 5%?
    let opts = EvalOptions { nsampl: 200, redraw_psu: true, min_psu_strat: 2, seed };
    let mc = eval_2stage(&frame, &inputs.strata, &psus, inputs.design.as_ref().unwrap(), &alloc, &opts)?;
    report::write_coeff_var(dir, &mc)?;
    for row in &mc.rows {
        println!("empirical CV ({}): {:.4}  {:.4}  over {} replicates", row.domain, row.cv[0], row.cv[1], mc.nsampl);
    }

    let mut files: Vec<String> = std::fs::read_dir(dir)?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    println!("\nartifacts in {}:", dir.display());
    for f in files {
        println!("  {f}");
    }
    Ok(())
}
