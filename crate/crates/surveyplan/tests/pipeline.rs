//! End-to-end tests of the command-line binary: the full planning chain
//! on a synthetic register, seed determinism across reruns, the exit-code
//! contract, and configuration-file precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surveyplan::frame::{synth_frame, SynthSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_surveyplan"));
    // Isolate every invocation from the ambient environment.
    c.env_remove("SURVEYPLAN_OUT_DIR");
    c
}

fn run_ok(c: &mut Command) -> Output {
    let out = c.output().expect("binary did not start");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(c: &mut Command) -> i32 {
    c.output().expect("binary did not start").status.code().unwrap_or(-1)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn write_frame(dir: &Path) -> PathBuf {
    let spec = SynthSpec {
        strata: 3,
        psus_per_stratum: 8,
        units_per_psu: (80, 260),
        binary_vars: 1,
        quant_vars: 1,
        psu_effect: 0.35,
        domains: 1,
    };
    let path = dir.join("frame.csv");
    synth_frame(&spec, 4242).write(&path).unwrap();
    path
}

#[test]
fn full_chain_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let frame = write_frame(dir);
    let work = dir.join("work");

    let out = run_ok(bin().args([
        "prepare",
        "--frame", &frame.display().to_string(),
        "--id-psu", "PSU_ID",
        "--id-ssu", "ID",
        "--strata-var", "STRATUM",
        "--target-vars", "B1,Y1",
        "--binary-vars", "B1",
        "--domain-var", "DOM",
        "--minimum", "10",
        "--out-dir", &work.display().to_string(),
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Number of strata: 3"), "unexpected summary: {stdout}");
    for f in ["strata.csv", "psu_file.csv", "des_file.csv", "rho.csv", "effst.csv", "run_manifest.json"] {
        assert!(work.join(f).exists(), "prepare did not write {f}");
    }

    run_ok(bin().args(["check", "--strata", &p(&work, "strata.csv"), "--psu", &p(&work, "psu_file.csv"), "--out-dir", &p(dir, "chk")]));
    assert!(dir.join("chk/check_report.csv").exists());

    std::fs::write(dir.join("errors.csv"), "DOM,CV1,CV2\nPOP,0.08,0.08\n").unwrap();
    let alloc_dir = dir.join("alloc");
    run_ok(bin().args([
        "allocate",
        "--stages", "2",
        "--strata", &p(&work, "strata.csv"),
        "--errors", &p(dir, "errors.csv"),
        "--psu", &p(&work, "psu_file.csv"),
        "--des", &p(&work, "des_file.csv"),
        "--rho", &p(&work, "rho.csv"),
        "--effst", &p(&work, "effst.csv"),
        "--out-dir", &alloc_dir.display().to_string(),
    ]));
    for f in ["alloc.csv", "alloc2.csv", "expected_cv.csv", "iterations.csv", "sensitivity.csv", "deft_trace.csv", "alloc_chart.svg", "run_manifest.json"] {
        assert!(alloc_dir.join(f).exists(), "allocate did not write {f}");
    }

    let sel = dir.join("sel");
    run_ok(bin().args([
        "select-psu",
        "--strata", &p(&work, "strata.csv"),
        "--psu", &p(&work, "psu_file.csv"),
        "--des", &p(&work, "des_file.csv"),
        "--alloc", &p(&alloc_dir, "alloc2.csv"),
        "--seed", "99",
        "--out-dir", &sel.display().to_string(),
    ]));
    for f in ["sample_PSU.csv", "universe_PSU.csv", "PSU_stats.csv"] {
        assert!(sel.join(f).exists(), "select-psu did not write {f}");
    }

    run_ok(bin().args([
        "select-ssu",
        "--frame", &frame.display().to_string(),
        "--id-psu", "PSU_ID",
        "--id-ssu", "ID",
        "--strata-var", "STRATUM",
        "--sample-psu", &p(&sel, "sample_PSU.csv"),
        "--seed", "99",
        "--out-dir", &sel.display().to_string(),
    ]));
    assert!(sel.join("sample_SSU.csv").exists());
    assert!(sel.join("weights_chart.svg").exists());

    let ev = dir.join("ev");
    run_ok(bin().args([
        "evaluate",
        "--frame", &frame.display().to_string(),
        "--id-psu", "PSU_ID",
        "--id-ssu", "ID",
        "--strata-var", "STRATUM",
        "--target-vars", "B1,Y1",
        "--domain-var", "DOM",
        "--strata", &p(&work, "strata.csv"),
        "--psu", &p(&work, "psu_file.csv"),
        "--des", &p(&work, "des_file.csv"),
        "--alloc", &p(&alloc_dir, "alloc2.csv"),
        "--nsampl", "60",
        "--seed", "5",
        "--out-dir", &ev.display().to_string(),
    ]));
    let cv = std::fs::read_to_string(ev.join("coeff_var.csv")).unwrap();
    assert!(cv.starts_with("CV1"), "unexpected coeff_var.csv header: {cv}");

    let sens = dir.join("sens");
    run_ok(bin().args([
        "sensitivity",
        "--strata", &p(&work, "strata.csv"),
        "--errors", &p(dir, "errors.csv"),
        "--psu", &p(&work, "psu_file.csv"),
        "--des", &p(&work, "des_file.csv"),
        "--rho", &p(&work, "rho.csv"),
        "--min-lo", "5",
        "--min-hi", "15",
        "--points", "3",
        "--out-dir", &sens.display().to_string(),
    ]));
    let grid = std::fs::read_to_string(sens.join("sensitivity_min_ssu.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "MINIMUM,PSU,SSU");
    assert_eq!(grid.lines().count(), 4, "3 grid points expected:\n{grid}");
}

#[test]
fn same_seed_reruns_are_byte_identical_and_seeds_matter() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let frame = write_frame(dir);
    let work = dir.join("work");
    run_ok(bin().args([
        "prepare",
        "--frame", &frame.display().to_string(),
        "--id-psu", "PSU_ID",
        "--id-ssu", "ID",
        "--strata-var", "STRATUM",
        "--target-vars", "B1,Y1",
        "--binary-vars", "B1",
        "--minimum", "10",
        "--out-dir", &work.display().to_string(),
    ]));
    std::fs::write(dir.join("errors.csv"), "DOM,CV1,CV2\nDOM1,0.08,0.08\n").unwrap();
    let alloc_dir = dir.join("alloc");
    run_ok(bin().args([
        "allocate",
        "--stages", "2",
        "--strata", &p(&work, "strata.csv"),
        "--errors", &p(dir, "errors.csv"),
        "--psu", &p(&work, "psu_file.csv"),
        "--des", &p(&work, "des_file.csv"),
        "--rho", &p(&work, "rho.csv"),
        "--out-dir", &alloc_dir.display().to_string(),
    ]));

    let select = |out: &Path, seed: &str| {
        run_ok(bin().args([
            "select-psu",
            "--strata", &p(&work, "strata.csv"),
            "--psu", &p(&work, "psu_file.csv"),
            "--des", &p(&work, "des_file.csv"),
            "--alloc", &p(&alloc_dir, "alloc2.csv"),
            "--seed", seed,
            "--out-dir", &out.display().to_string(),
        ]));
        run_ok(bin().args([
            "select-ssu",
            "--frame", &frame.display().to_string(),
            "--id-psu", "PSU_ID",
            "--id-ssu", "ID",
            "--strata-var", "STRATUM",
            "--sample-psu", &out.join("sample_PSU.csv").display().to_string(),
            "--seed", seed,
            "--out-dir", &out.display().to_string(),
        ]));
    };
    let (a, b, c) = (dir.join("s1"), dir.join("s2"), dir.join("s3"));
    select(&a, "17");
    select(&b, "17");
    select(&c, "18");

    for f in ["sample_PSU.csv", "universe_PSU.csv", "PSU_stats.csv", "sample_SSU.csv", "run_manifest.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs between same-seed runs");
    }
    let x = std::fs::read(a.join("sample_SSU.csv")).unwrap();
    let z = std::fs::read(c.join("sample_SSU.csv")).unwrap();
    assert!(x != z, "different seeds produced an identical final-stage sample");
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // 0: help and version are not errors.
    assert_eq!(code(bin().arg("--help")), 0);
    assert_eq!(code(bin().args(["allocate", "--help"])), 0);
    assert_eq!(code(bin().arg("--version")), 0);

    // 2: bad invocations, whether caught by the parser or by validation.
    assert_eq!(code(bin().arg("frobnicate")), 2, "unknown subcommand");
    assert_eq!(code(bin().args(["allocate", "--no-such-flag"])), 2, "unknown flag");
    assert_eq!(code(bin().args(["prepare", "--id-psu", "PSU_ID"])), 2, "missing required value");
    std::fs::write(dir.join("s.csv"), "STRATUM,N,M1,S1\nA,100,1.0,0.5\n").unwrap();
    std::fs::write(dir.join("e.csv"), "DOM,CV1\nDOM1,0.1\n").unwrap();
    assert_eq!(
        code(bin().args([
            "allocate",
            "--stages", "3",
            "--strata", &p(dir, "s.csv"),
            "--errors", &p(dir, "e.csv"),
            "--out-dir", &p(dir, "o"),
        ])),
        2,
        "stages out of range"
    );
    assert_eq!(
        code(bin().args([
            "allocate",
            "--stages", "2",
            "--strata", &p(dir, "s.csv"),
            "--errors", &p(dir, "e.csv"),
            "--out-dir", &p(dir, "o"),
        ])),
        2,
        "two-stage run without PSU inputs"
    );

    // 1: a well-formed invocation that fails while running.
    assert_eq!(
        code(bin().args([
            "allocate",
            "--strata", &p(dir, "missing.csv"),
            "--errors", &p(dir, "e.csv"),
            "--out-dir", &p(dir, "o"),
        ])),
        1,
        "nonexistent input file"
    );

    // And the success path for the same fixture.
    assert_eq!(
        code(bin().args([
            "allocate",
            "--strata", &p(dir, "s.csv"),
            "--errors", &p(dir, "e.csv"),
            "--out-dir", &p(dir, "o"),
        ])),
        0
    );
    assert!(dir.join("o/alloc.csv").exists());
    assert!(!dir.join("o/alloc2.csv").exists(), "one-stage run must not write PSU columns");
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("s.csv"), "STRATUM,N,M1,S1\nA,500,2.0,0.7\nB,300,1.5,0.6\n").unwrap();
    std::fs::write(dir.join("e.csv"), "DOM,CV1\nDOM1,0.05\n").unwrap();
    std::fs::write(
        dir.join("surveyplan.toml"),
        "out_dir = \"from_config\"\n\n[allocate]\nstrata = \"s.csv\"\nerrors = \"e.csv\"\n",
    )
    .unwrap();

    // Everything, including the output directory, comes from the file.
    run_ok(bin().current_dir(dir).args(["--config", "surveyplan.toml", "allocate"]));
    assert!(dir.join("from_config/alloc.csv").exists());

    // A flag on the command line overrides the same key in the file.
    run_ok(bin().current_dir(dir).args([
        "--config", "surveyplan.toml",
        "--out-dir", "from_flag",
        "allocate",
    ]));
    assert!(dir.join("from_flag/alloc.csv").exists());

    // A bad value type in the file is a usage error, not a crash.
    std::fs::write(dir.join("bad.toml"), "[allocate]\nstrata = 7\n").unwrap();
    let out = bin()
        .current_dir(dir)
        .args(["--config", "bad.toml", "allocate", "--errors", "e.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("strata"), "error should name the offending key: {err}");
}

#[test]
fn out_dir_env_var_is_the_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("s.csv"), "STRATUM,N,M1,S1\nA,400,1.0,0.4\n").unwrap();
    std::fs::write(dir.join("e.csv"), "DOM,CV1\nDOM1,0.1\n").unwrap();

    let env_dir = dir.join("from_env");
    run_ok(
        bin()
            .current_dir(dir)
            .env("SURVEYPLAN_OUT_DIR", &env_dir)
            .args(["allocate", "--strata", "s.csv", "--errors", "e.csv"]),
    );
    assert!(env_dir.join("alloc.csv").exists());

    // An explicit flag still wins over the environment.
    run_ok(
        bin()
            .current_dir(dir)
            .env("SURVEYPLAN_OUT_DIR", &env_dir)
            .args(["allocate", "--strata", "s.csv", "--errors", "e.csv", "--out-dir", "flagged"]),
    );
    assert!(dir.join("flagged/alloc.csv").exists());
}
