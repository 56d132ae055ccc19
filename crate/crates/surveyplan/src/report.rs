//! Run artefacts: every command writes its results as CSV files with
//! fixed headers, plus a `run_manifest.json` recording the resolved
//! parameters. Readers for the artefacts that later pipeline stages
//! consume (the allocation and the PSU sample) live here too, so the
//! whole chain round-trips through files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluate::EvalReport;
use crate::frame::{Frame, PreparedInputs};
use crate::model::{
    format_f64, write_csv, write_strata, AllocationResult, CheckReport, StrataTable,
};
use crate::selection::{PsuSelection, SelectedPsu, SelectedSsu};
use crate::twostage::MinimumSensitivityRow;

fn yes_no(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// `alloc.csv`: the optimal allocation next to proportional and equal
/// reference allocations of the same total.
pub fn write_alloc(dir: &Path, res: &AllocationResult) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .zip(res.alloc_prop.iter().zip(&res.alloc_equal))
        .map(|(r, (&p, &e))| {
            vec![r.stratum.clone(), r.ssu.to_string(), p.to_string(), e.to_string()]
        })
        .collect();
    let path = dir.join("alloc.csv");
    write_csv(&path, &["STRATUM", "ALLOC", "PROP", "EQUAL"], &rows)?;
    Ok(path)
}

/// `alloc2.csv`: the two-stage structure per stratum — final-stage
/// units, PSU counts on both sides of the threshold, and the threshold.
pub fn write_alloc2(dir: &Path, res: &AllocationResult) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            vec![
                r.stratum.clone(),
                r.ssu.to_string(),
                r.psu_sr.to_string(),
                r.psu_nsr.to_string(),
                format_f64(r.threshold),
            ]
        })
        .collect();
    let path = dir.join("alloc2.csv");
    write_csv(&path, &["STRATUM", "SSU", "PSU_SR", "PSU_NSR", "THRESHOLD"], &rows)?;
    Ok(path)
}

/// `iterations.csv`: the algorithm trace, one row per iteration.
pub fn write_iterations(dir: &Path, res: &AllocationResult) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = res
        .iterations
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.psu_sr.to_string(),
                r.psu_nsr.to_string(),
                r.psu_total.to_string(),
                r.ssu_total.to_string(),
            ]
        })
        .collect();
    let path = dir.join("iterations.csv");
    write_csv(&path, &["ITERATION", "PSU_SR", "PSU_NSR", "PSU_TOTAL", "SSU_TOTAL"], &rows)?;
    Ok(path)
}

/// `expected_cv.csv`: the CVs the final allocation is expected to
/// deliver, one row per constrained domain category.
pub fn write_expected_cv(dir: &Path, res: &AllocationResult) -> Result<PathBuf> {
    let n_vars = res.expected_cv.first().map_or(0, |r| r.cvs.len());
    let mut headers = vec!["DOM".to_string()];
    headers.extend((1..=n_vars).map(|j| format!("CV{j}")));
    let headers: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = res
        .expected_cv
        .iter()
        .map(|r| {
            let mut row = vec![r.domain.clone()];
            row.extend(r.cvs.iter().map(|&v| format_f64(v)));
            row
        })
        .collect();
    let path = dir.join("expected_cv.csv");
    write_csv(&path, &headers, &rows)?;
    Ok(path)
}

/// `sensitivity.csv`: planned against expected CV and the sample-size
/// saving from relaxing each ceiling by 10%.
pub fn write_sensitivity(dir: &Path, res: &AllocationResult) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = res
        .sensitivity
        .iter()
        .map(|r| {
            vec![
                r.domain.clone(),
                r.var.to_string(),
                format_f64(r.planned_cv),
                format_f64(r.expected_cv),
                r.delta_n.to_string(),
            ]
        })
        .collect();
    let path = dir.join("sensitivity.csv");
    write_csv(&path, &["DOM", "VAR", "PLANNED_CV", "ACTUAL_CV", "SENS_10PCT"], &rows)?;
    Ok(path)
}

/// `deft_trace.csv`: design-effect factors per iteration and stratum.
pub fn write_deft_trace(dir: &Path, res: &AllocationResult) -> Result<PathBuf> {
    let n_vars = res.deft_trace.first().map_or(0, |r| r.deft.len());
    let mut headers = vec!["ITERATION".to_string(), "STRATUM".to_string()];
    headers.extend((1..=n_vars).map(|j| format!("DEFT{j}")));
    let headers: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = res
        .deft_trace
        .iter()
        .map(|r| {
            let mut row = vec![r.iteration.to_string(), r.stratum.clone()];
            row.extend(r.deft.iter().map(|&v| format_f64(v)));
            row
        })
        .collect();
    let path = dir.join("deft_trace.csv");
    write_csv(&path, &headers, &rows)?;
    Ok(path)
}

/// `universe_PSU.csv`: every PSU with its sub-stratum, certainty flag,
/// inclusion probability and whether the draw selected it.
pub fn write_universe_psu(dir: &Path, sel: &PsuSelection) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = sel
        .universe
        .iter()
        .map(|u| {
            vec![
                u.psu_id.clone(),
                u.stratum.clone(),
                u.mos.to_string(),
                u.substratum.clone(),
                yes_no(u.sr).to_string(),
                format_f64(u.pik),
                yes_no(u.selected).to_string(),
            ]
        })
        .collect();
    let path = dir.join("universe_PSU.csv");
    write_csv(
        &path,
        &["PSU_ID", "STRATUM", "PSU_MOS", "stratum", "SR", "Pik", "SELECTED"],
        &rows,
    )?;
    Ok(path)
}

/// `sample_PSU.csv`: the drawn PSUs with workloads and design weights.
/// The lowercase `stratum` column holds the sub-stratum label.
pub fn write_sample_psu(dir: &Path, sel: &PsuSelection) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = sel
        .sample
        .iter()
        .map(|p| {
            vec![
                p.psu_id.clone(),
                p.stratum.clone(),
                p.substratum.clone(),
                yes_no(p.sr).to_string(),
                p.ssu_to_select.to_string(),
                format_f64(p.pik),
                format_f64(p.weight_1st),
                format_f64(p.weight_2st),
                format_f64(p.weight),
            ]
        })
        .collect();
    let path = dir.join("sample_PSU.csv");
    write_csv(
        &path,
        &[
            "PSU_ID",
            "STRATUM",
            "stratum",
            "SR",
            "PSU_final_sample_unit",
            "Pik",
            "weight_1st",
            "weight_2st",
            "weight",
        ],
        &rows,
    )?;
    Ok(path)
}

/// `PSU_stats.csv`: per-stratum tallies of the realised first stage,
/// closed by a Total row.
pub fn write_psu_stats(dir: &Path, sel: &PsuSelection) -> Result<PathBuf> {
    let mut rows: Vec<Vec<String>> = sel
        .stats
        .iter()
        .map(|s| {
            vec![
                s.stratum.clone(),
                s.psu.to_string(),
                s.psu_sr.to_string(),
                s.psu_nsr.to_string(),
                s.ssu.to_string(),
                s.ssu_sr.to_string(),
                s.ssu_nsr.to_string(),
            ]
        })
        .collect();
    let t = sel.totals();
    rows.push(vec![
        t.stratum,
        t.psu.to_string(),
        t.psu_sr.to_string(),
        t.psu_nsr.to_string(),
        t.ssu.to_string(),
        t.ssu_sr.to_string(),
        t.ssu_nsr.to_string(),
    ]);
    let path = dir.join("PSU_stats.csv");
    write_csv(
        &path,
        &["STRATUM", "PSU", "PSU_SR", "PSU_NSR", "SSU", "SSU_SR", "SSU_NSR"],
        &rows,
    )?;
    Ok(path)
}

/// `sample_SSU.csv`: the frame rows of the selected units, with the
/// two-stage probabilities and the design weight appended.
pub fn write_sample_ssu(dir: &Path, frame: &Frame, units: &[SelectedSsu]) -> Result<PathBuf> {
    let path = dir.join("sample_SSU.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::FileWrite {
        path: path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let mut headers = frame.headers.clone();
    headers.extend(["PROB_1ST", "PROB_2ST", "PROB_FINAL", "WEIGHT"].map(String::from));
    w.write_record(&headers)?;
    for u in units {
        let mut row: Vec<String> = frame.records[u.row].iter().map(String::from).collect();
        row.push(format_f64(u.prob_1st));
        row.push(format_f64(u.prob_2st));
        row.push(format_f64(u.prob));
        row.push(format_f64(u.weight));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

/// `coeff_var.csv`: empirical CVs from the Monte Carlo evaluation, one
/// row per domain category with the CV columns first and the domain last.
pub fn write_coeff_var(dir: &Path, rep: &EvalReport) -> Result<PathBuf> {
    let n_vars = rep.rows.first().map_or(0, |r| r.cv.len());
    let mut headers: Vec<String> = (1..=n_vars).map(|j| format!("CV{j}")).collect();
    headers.push("dom".to_string());
    let headers: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> =
                r.cv.iter().map(|&v| if v.is_finite() { format_f64(v) } else { "NA".into() }).collect();
            row.push(r.domain.clone());
            row
        })
        .collect();
    let path = dir.join("coeff_var.csv");
    write_csv(&path, &headers, &rows)?;
    Ok(path)
}

/// `sensitivity_min_ssu.csv`: total PSUs and SSUs over the grid of
/// per-PSU workload floors.
pub fn write_min_sensitivity(dir: &Path, rows: &[MinimumSensitivityRow]) -> Result<PathBuf> {
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.minimum.to_string(), r.psu_total.to_string(), r.ssu_total.to_string()])
        .collect();
    let path = dir.join("sensitivity_min_ssu.csv");
    write_csv(&path, &["MINIMUM", "PSU", "SSU"], &csv_rows)?;
    Ok(path)
}

/// `check_report.csv` and `strata_checked.csv`: the coherence report and
/// the corrected strata table.
pub fn write_check(dir: &Path, rep: &CheckReport) -> Result<(PathBuf, PathBuf)> {
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.stratum.clone(),
                r.n_strata.to_string(),
                r.n_psu.to_string(),
                r.psu_count.to_string(),
                r.discrepancy.to_string(),
            ]
        })
        .collect();
    let report = dir.join("check_report.csv");
    write_csv(&report, &["STRATUM", "N", "PSU_MOS_TOTAL", "PSU_COUNT", "DISCREPANCY"], &rows)?;
    let corrected = dir.join("strata_checked.csv");
    write_strata(&corrected, &rep.corrected)?;
    Ok((report, corrected))
}

/// The six input tables produced by `prepare`, named as the reference
/// workflow names its dataframes.
pub fn write_prepared(dir: &Path, prep: &PreparedInputs) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let strata = dir.join("strata.csv");
    write_strata(&strata, &prep.strata)?;
    written.push(strata);

    let n_vars = prep.strata.n_vars;

    let path = dir.join("psu_file.csv");
    let rows: Vec<Vec<String>> = prep
        .psus
        .iter()
        .map(|p| vec![p.id.clone(), p.stratum.clone(), p.mos.to_string()])
        .collect();
    write_csv(&path, &["PSU_ID", "STRATUM", "PSU_MOS"], &rows)?;
    written.push(path);

    let path = dir.join("des_file.csv");
    let rows: Vec<Vec<String>> = prep
        .design
        .iter()
        .map(|d| vec![d.stratum.clone(), format_f64(d.delta), d.minimum.to_string()])
        .collect();
    write_csv(&path, &["STRATUM", "DELTA", "MINIMUM"], &rows)?;
    written.push(path);

    let path = dir.join("rho.csv");
    let mut headers = vec!["STRATUM".to_string()];
    for j in 1..=n_vars {
        headers.push(format!("RHO_AR{j}"));
        headers.push(format!("RHO_NAR{j}"));
    }
    let headers: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = prep
        .rho
        .iter()
        .map(|r| {
            let mut row = vec![r.stratum.clone()];
            for j in 0..n_vars {
                row.push(format_f64(r.rho_sr[j]));
                row.push(format_f64(r.rho_nsr[j]));
            }
            row
        })
        .collect();
    write_csv(&path, &headers, &rows)?;
    written.push(path);

    let path = dir.join("effst.csv");
    let mut headers = vec!["STRATUM".to_string()];
    headers.extend((1..=n_vars).map(|j| format!("EFFST{j}")));
    let headers: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = prep
        .effst
        .iter()
        .map(|r| {
            let mut row = vec![r.stratum.clone()];
            row.extend(r.effst.iter().map(|&v| format_f64(v)));
            row
        })
        .collect();
    write_csv(&path, &headers, &rows)?;
    written.push(path);

    if let Some(deft) = &prep.deft {
        let path = dir.join("deff.csv");
        let mut headers = vec!["STRATUM".to_string()];
        headers.extend((1..=n_vars).map(|j| format!("DEFT{j}")));
        let headers: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<String>> = deft
            .iter()
            .map(|r| {
                let mut row = vec![r.stratum.clone()];
                row.extend(r.deft.iter().map(|&v| format_f64(v)));
                row
            })
            .collect();
        write_csv(&path, &headers, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Read the final-stage sample sizes back from an `alloc2.csv` (or
/// `alloc.csv`), returning them in strata-table order.
pub fn read_alloc(path: &Path, strata: &StrataTable) -> Result<Vec<u64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::FileRead {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_uppercase()).collect();
    let c_str = headers
        .iter()
        .position(|h| h == "STRATUM")
        .ok_or_else(|| Error::schema(format!("{}: missing column STRATUM", path.display())))?;
    let c_ssu = headers
        .iter()
        .position(|h| h == "SSU" || h == "ALLOC")
        .ok_or_else(|| Error::schema(format!("{}: missing column SSU or ALLOC", path.display())))?;
    let mut by: BTreeMap<String, u64> = BTreeMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(c_str).unwrap_or("").to_string();
        let raw = rec.get(c_ssu).unwrap_or("");
        let v: u64 = raw.parse().map_err(|_| {
            Error::parse_at(&path.display().to_string(), r + 1, "SSU", format!("not a count: {raw:?}"))
        })?;
        by.insert(id, v);
    }
    strata
        .strata
        .iter()
        .map(|s| {
            by.get(&s.id).copied().ok_or_else(|| {
                Error::Reference(format!("{}: no allocation for stratum {}", path.display(), s.id))
            })
        })
        .collect()
}

/// Read a `sample_PSU.csv` back into selected-PSU records for the
/// second-stage draw. The measure of size is not part of the file; it
/// is recovered from the weights (mos = weight_2st · workload).
pub fn read_sample_psu(path: &Path) -> Result<Vec<SelectedPsu>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::FileRead {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| {
            Error::schema(format!("{}: missing column {name}", path.display()))
        })
    };
    let c_id = find("PSU_ID")?;
    let c_stratum = find("STRATUM")?;
    let c_sub = headers
        .iter()
        .position(|h| h == "stratum")
        .unwrap_or(c_stratum);
    let c_sr = find("SR")?;
    let c_n = find("PSU_final_sample_unit")?;
    let c_pik = find("Pik")?;
    let c_w2 = find("weight_2st")?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("").to_string();
        let pik: f64 = get(c_pik)
            .parse()
            .map_err(|_| Error::parse_at(&file, r + 1, "Pik", "not a number"))?;
        if !(pik > 0.0 && pik <= 1.0) {
            return Err(Error::parse_at(&file, r + 1, "Pik", format!("out of (0,1]: {pik}")));
        }
        let n: u64 = get(c_n)
            .parse()
            .map_err(|_| Error::parse_at(&file, r + 1, "PSU_final_sample_unit", "not a count"))?;
        let w2: f64 = get(c_w2)
            .parse()
            .map_err(|_| Error::parse_at(&file, r + 1, "weight_2st", "not a number"))?;
        out.push(SelectedPsu {
            psu_id: get(c_id),
            stratum: get(c_stratum),
            substratum: get(c_sub),
            mos: (w2 * n as f64).round() as u64,
            sr: get(c_sr) == "1",
            pik,
            ssu_to_select: n,
            weight_1st: 1.0 / pik,
            weight_2st: w2,
            weight: w2 / pik,
        });
    }
    if out.is_empty() {
        return Err(Error::schema(format!("{}: no PSUs in sample", path.display())));
    }
    Ok(out)
}

/// `run_manifest.json`: the resolved parameters, inputs and outputs of a
/// run. Deliberately carries no timestamps, and any paths under the
/// manifest's own directory are recorded relative to it, so same-seed
/// reruns stay byte-identical wherever they land.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    params: &[(String, String)],
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let rel = |v: &str| match Path::new(v).strip_prefix(dir) {
        Ok(p) => p.display().to_string(),
        Err(_) => v.to_string(),
    };
    let params: BTreeMap<&str, String> =
        params.iter().map(|(k, v)| (k.as_str(), rel(v))).collect();
    let doc = serde_json::json!({
        "command": command,
        "params": params,
        "inputs": inputs
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect::<Vec<_>>(),
        "outputs": outputs
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect::<Vec<_>>(),
    });
    let path = dir.join("run_manifest.json");
    std::fs::write(&path, format!("{:#}\n", doc)).map_err(|e| Error::FileWrite {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}
