//! CSV readers and writers for every interchange table.
//!
//! Readers are header-driven (column order does not matter, names are
//! case-insensitive) and fail fast with the file, 1-based data row and
//! column of the first offending cell. Repeated per-variable columns are
//! detected as `M1..MJ`-style series: consecutive numbering from 1, and a
//! gap (`M1, M3`) is a schema error rather than a silently shorter series.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::records::*;

/// Paths to the planning input tables; only the first two are mandatory.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub strata: PathBuf,
    pub errors: PathBuf,
    pub psu: Option<PathBuf>,
    pub des: Option<PathBuf>,
    pub rho: Option<PathBuf>,
    pub deft: Option<PathBuf>,
    pub effst: Option<PathBuf>,
}

struct Table {
    file: String,
    headers: Vec<String>,
    upper: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::FileRead {
                    path: path.to_path_buf(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => Error::Csv(e),
            })?;
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let upper: Vec<String> = headers.iter().map(|h| h.to_uppercase()).collect();
        for (i, u) in upper.iter().enumerate() {
            if upper[..i].contains(u) {
                return Err(Error::schema(format!(
                    "{}: duplicate column {}",
                    path.display(),
                    headers[i]
                )));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?);
        }
        Ok(Table {
            file: path.display().to_string(),
            headers,
            upper,
            rows,
        })
    }

    fn col(&self, name: &str) -> Option<usize> {
        let want = name.to_uppercase();
        self.upper.iter().position(|h| *h == want)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.col(name).ok_or_else(|| {
            Error::schema(format!("{}: missing required column {}", self.file, name))
        })
    }

    /// Indices of `prefix1, prefix2, ...`, consecutive from 1.
    fn series(&self, prefix: &str) -> Result<Vec<usize>> {
        let mut idx = Vec::new();
        loop {
            match self.col(&format!("{}{}", prefix, idx.len() + 1)) {
                Some(c) => idx.push(c),
                None => break,
            }
        }
        // A column like `prefix5` beyond the consecutive run means a gap.
        let pat_num = |h: &str| -> Option<usize> {
            h.strip_prefix(&prefix.to_uppercase())
                .and_then(|s| s.parse::<usize>().ok())
        };
        for h in &self.upper {
            if let Some(n) = pat_num(h) {
                if n == 0 || n > idx.len() {
                    return Err(Error::schema(format!(
                        "{}: column {}{} present but {}{} missing",
                        self.file,
                        prefix,
                        n,
                        prefix,
                        if n == 0 { 1 } else { idx.len() + 1 }
                    )));
                }
            }
        }
        Ok(idx)
    }

    fn get(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    fn f64(&self, row: usize, col: usize) -> Result<f64> {
        let raw = self.get(row, col);
        raw.parse::<f64>().map_err(|_| {
            Error::parse_at(
                &self.file,
                row + 1,
                &self.headers[col],
                format!("not a number: {raw:?}"),
            )
        })
    }

    /// A count: numeric, non-negative, integral within 1e-9 relative.
    fn count(&self, row: usize, col: usize) -> Result<u64> {
        let v = self.f64(row, col)?;
        let r = v.round();
        if v < 0.0 || (v - r).abs() > 1e-9 * v.abs().max(1.0) || r > u64::MAX as f64 {
            return Err(Error::parse_at(
                &self.file,
                row + 1,
                &self.headers[col],
                format!("expected a non-negative integer, got {v}"),
            ));
        }
        Ok(r as u64)
    }

    fn text(&self, row: usize, col: usize) -> Result<String> {
        let raw = self.get(row, col);
        if raw.is_empty() {
            return Err(Error::parse_at(
                &self.file,
                row + 1,
                &self.headers[col],
                "empty value",
            ));
        }
        Ok(raw.to_string())
    }
}

/// Load the strata table: `STRATUM, N, M1..MJ, S1..SJ[, COST][, CENS]
/// [, DOM1..DOMK]`. COST defaults to 1, CENS to 0; a missing DOM1 implies
/// one national domain labelled `POP`.
pub fn load_strata(path: &Path) -> Result<StrataTable> {
    let t = Table::read(path)?;
    let c_id = t.require("STRATUM")?;
    let c_n = t.require("N")?;
    let c_m = t.series("M")?;
    let c_s = t.series("S")?;
    if c_m.is_empty() {
        return Err(Error::schema(format!("{}: no target-variable columns (M1..)", t.file)));
    }
    if c_m.len() != c_s.len() {
        return Err(Error::schema(format!(
            "{}: {} mean columns (M*) but {} deviation columns (S*)",
            t.file,
            c_m.len(),
            c_s.len()
        )));
    }
    let c_cost = t.col("COST");
    let c_cens = t.col("CENS");
    let c_dom = t.series("DOM")?;

    let mut strata = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let id = t.text(r, c_id)?;
        let pop = t.count(r, c_n)?;
        if pop == 0 {
            return Err(Error::parse_at(&t.file, r + 1, "N", "stratum population must be positive"));
        }
        let means: Vec<f64> = c_m.iter().map(|&c| t.f64(r, c)).collect::<Result<_>>()?;
        let stdevs: Vec<f64> = c_s.iter().map(|&c| t.f64(r, c)).collect::<Result<_>>()?;
        for (j, s) in stdevs.iter().enumerate() {
            if *s < 0.0 {
                return Err(Error::parse_at(
                    &t.file,
                    r + 1,
                    &format!("S{}", j + 1),
                    "standard deviation must be non-negative",
                ));
            }
        }
        let cost = match c_cost {
            Some(c) => {
                let v = t.f64(r, c)?;
                if v <= 0.0 {
                    return Err(Error::parse_at(&t.file, r + 1, "COST", "cost must be positive"));
                }
                v
            }
            None => 1.0,
        };
        let census = match c_cens {
            Some(c) => match t.count(r, c)? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::parse_at(
                        &t.file,
                        r + 1,
                        "CENS",
                        format!("expected 0 or 1, got {other}"),
                    ))
                }
            },
            None => false,
        };
        let domains = if c_dom.is_empty() {
            vec!["POP".to_string()]
        } else {
            c_dom.iter().map(|&c| t.text(r, c)).collect::<Result<_>>()?
        };
        strata.push(StratumInfo {
            id,
            pop,
            means,
            stdevs,
            cost,
            census,
            domains,
        });
    }
    if strata.is_empty() {
        return Err(Error::schema(format!("{}: no strata rows", t.file)));
    }
    for (i, s) in strata.iter().enumerate() {
        if strata[..i].iter().any(|p| p.id == s.id) {
            return Err(Error::schema(format!("{}: duplicate stratum {}", t.file, s.id)));
        }
    }
    // Soft plausibility check for proportion-like variables.
    for s in &strata {
        for j in 0..s.means.len() {
            let m = s.means[j];
            if (0.0..=1.0).contains(&m) && s.stdevs[j].powi(2) > m * (1.0 - m) + 1e-6 {
                log::warn!(
                    "stratum {}, variable {}: mean {} looks like a proportion but S^2={} exceeds p(1-p)",
                    s.id, j + 1, m, s.stdevs[j].powi(2)
                );
            }
        }
    }
    let n_vars = c_m.len();
    let n_domain_types = strata[0].domains.len();
    Ok(StrataTable { strata, n_vars, n_domain_types })
}

/// Load the precision table: `DOM, CV1..CVJ`.
pub fn load_constraints(path: &Path) -> Result<Vec<PrecisionConstraints>> {
    let t = Table::read(path)?;
    let c_dom = t.require("DOM")?;
    let c_cv = t.series("CV")?;
    if c_cv.is_empty() {
        return Err(Error::schema(format!("{}: no CV columns (CV1..)", t.file)));
    }
    let mut rows = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let domain = t.text(r, c_dom)?;
        let cvs: Vec<f64> = c_cv.iter().map(|&c| t.f64(r, c)).collect::<Result<_>>()?;
        for (j, cv) in cvs.iter().enumerate() {
            if !(*cv > 0.0) {
                return Err(Error::parse_at(
                    &t.file,
                    r + 1,
                    &format!("CV{}", j + 1),
                    "precision ceiling must be positive",
                ));
            }
        }
        rows.push(PrecisionConstraints { domain, cvs });
    }
    if rows.is_empty() {
        return Err(Error::schema(format!("{}: no precision rows", t.file)));
    }
    Ok(rows)
}

/// Load the PSU table: `PSU_ID, STRATUM, PSU_MOS`.
pub fn load_psus(path: &Path) -> Result<Vec<PsuRecord>> {
    let t = Table::read(path)?;
    let c_id = t.require("PSU_ID")?;
    let c_st = t.require("STRATUM")?;
    let c_mos = t.require("PSU_MOS")?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let id = t.text(r, c_id)?;
        let stratum = t.text(r, c_st)?;
        let mos = t.count(r, c_mos)?;
        if mos == 0 {
            return Err(Error::parse_at(&t.file, r + 1, "PSU_MOS", "measure of size must be positive"));
        }
        out.push(PsuRecord { id, stratum, mos });
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in &out {
        if !seen.insert(&p.id) {
            return Err(Error::schema(format!("{}: duplicate PSU_ID {}", t.file, p.id)));
        }
    }
    Ok(out)
}

/// Load per-stratum design parameters: `STRATUM, DELTA, MINIMUM`.
pub fn load_design(path: &Path) -> Result<Vec<DesignParams>> {
    let t = Table::read(path)?;
    let c_st = t.require("STRATUM")?;
    let c_delta = t.require("DELTA")?;
    let c_min = t.require("MINIMUM")?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let stratum = t.text(r, c_st)?;
        let delta = t.f64(r, c_delta)?;
        if !(delta > 0.0) {
            return Err(Error::parse_at(&t.file, r + 1, "DELTA", "must be positive"));
        }
        let minimum = t.count(r, c_min)?;
        if minimum == 0 {
            return Err(Error::parse_at(&t.file, r + 1, "MINIMUM", "must be at least 1"));
        }
        out.push(DesignParams { stratum, delta, minimum });
    }
    dedup_strata(&t.file, out.iter().map(|d| d.stratum.as_str()))?;
    Ok(out)
}

/// Load intraclass correlations: `STRATUM, RHO_AR1.., RHO_NAR1..`.
pub fn load_rho(path: &Path) -> Result<Vec<RhoRow>> {
    let t = Table::read(path)?;
    let c_st = t.require("STRATUM")?;
    let c_ar = t.series("RHO_AR")?;
    let c_nar = t.series("RHO_NAR")?;
    if c_ar.is_empty() || c_ar.len() != c_nar.len() {
        return Err(Error::schema(format!(
            "{}: need matching RHO_AR1../RHO_NAR1.. series, found {}/{}",
            t.file,
            c_ar.len(),
            c_nar.len()
        )));
    }
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let stratum = t.text(r, c_st)?;
        let rho_sr: Vec<f64> = c_ar.iter().map(|&c| t.f64(r, c)).collect::<Result<_>>()?;
        let rho_nsr: Vec<f64> = c_nar.iter().map(|&c| t.f64(r, c)).collect::<Result<_>>()?;
        for (j, v) in rho_nsr.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::parse_at(
                    &t.file,
                    r + 1,
                    &format!("RHO_NAR{}", j + 1),
                    format!("intraclass correlation must be in [0,1], got {v}"),
                ));
            }
        }
        for v in &rho_sr {
            if (*v - 1.0).abs() > 1e-12 {
                log::warn!(
                    "{}: stratum {} has RHO_AR {} (self-representing part is normally 1)",
                    t.file, stratum, v
                );
            }
        }
        out.push(RhoRow { stratum, rho_sr, rho_nsr });
    }
    dedup_strata(&t.file, out.iter().map(|d| d.stratum.as_str()))?;
    Ok(out)
}

/// Load starting design effects: `STRATUM, DEFT1..`.
pub fn load_deft(path: &Path) -> Result<Vec<DeftRow>> {
    let t = Table::read(path)?;
    let c_st = t.require("STRATUM")?;
    let c = t.series("DEFT")?;
    if c.is_empty() {
        return Err(Error::schema(format!("{}: no DEFT columns", t.file)));
    }
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let stratum = t.text(r, c_st)?;
        let deft: Vec<f64> = c.iter().map(|&cc| t.f64(r, cc)).collect::<Result<_>>()?;
        for (j, v) in deft.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::parse_at(&t.file, r + 1, &format!("DEFT{}", j + 1), "must be positive"));
            }
        }
        out.push(DeftRow { stratum, deft });
    }
    dedup_strata(&t.file, out.iter().map(|d| d.stratum.as_str()))?;
    Ok(out)
}

/// Load estimator effects: `STRATUM, EFFST1..`.
pub fn load_effst(path: &Path) -> Result<Vec<EffstRow>> {
    let t = Table::read(path)?;
    let c_st = t.require("STRATUM")?;
    let c = t.series("EFFST")?;
    if c.is_empty() {
        return Err(Error::schema(format!("{}: no EFFST columns", t.file)));
    }
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let stratum = t.text(r, c_st)?;
        let effst: Vec<f64> = c.iter().map(|&cc| t.f64(r, cc)).collect::<Result<_>>()?;
        for (j, v) in effst.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::parse_at(&t.file, r + 1, &format!("EFFST{}", j + 1), "must be positive"));
            }
        }
        out.push(EffstRow { stratum, effst });
    }
    dedup_strata(&t.file, out.iter().map(|d| d.stratum.as_str()))?;
    Ok(out)
}

fn dedup_strata<'a>(file: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::schema(format!("{file}: duplicate stratum {id}")));
        }
    }
    Ok(())
}

/// Load every table named in `paths` and run cross-file checks: variable
/// arities must agree with the strata table, per-stratum tables must cover
/// every stratum exactly, PSUs must reference existing strata, and the
/// precision rows must resolve against the domain layout.
pub fn load_inputs(paths: &InputPaths) -> Result<DesignInputs> {
    let strata = load_strata(&paths.strata)?;
    let constraints = load_constraints(&paths.errors)?;
    for row in &constraints {
        if row.cvs.len() != strata.n_vars {
            return Err(Error::schema(format!(
                "{}: row {} has {} CV columns but the strata table defines {} variables",
                paths.errors.display(),
                row.domain,
                row.cvs.len(),
                strata.n_vars
            )));
        }
    }
    crate::model::domains::validate_domains(&strata, &constraints)?;

    let psus = match &paths.psu {
        Some(p) => {
            let psus = load_psus(p)?;
            for rec in &psus {
                if strata.index_of(&rec.stratum).is_none() {
                    return Err(Error::Reference(format!(
                        "{}: PSU {} references unknown stratum {}",
                        p.display(),
                        rec.id,
                        rec.stratum
                    )));
                }
            }
            for s in &strata.strata {
                let total: u64 = psus.iter().filter(|x| x.stratum == s.id).map(|x| x.mos).sum();
                if total == 0 {
                    log::warn!("stratum {} has no PSUs; two-stage steps will reject it", s.id);
                } else if total != s.pop {
                    log::warn!(
                        "stratum {}: N={} but PSU sizes sum to {} (run the check step to reconcile)",
                        s.id, s.pop, total
                    );
                }
            }
            Some(psus)
        }
        None => None,
    };

    let design = load_per_stratum(paths.des.as_deref(), &strata, load_design, |d| &d.stratum, "design")?;
    let rho = load_per_stratum(paths.rho.as_deref(), &strata, load_rho, |d| &d.stratum, "rho")?;
    if let Some(rows) = &rho {
        for row in rows {
            if row.rho_nsr.len() != strata.n_vars {
                return Err(Error::schema(format!(
                    "rho table: stratum {} has {} variables, strata table defines {}",
                    row.stratum,
                    row.rho_nsr.len(),
                    strata.n_vars
                )));
            }
        }
    }
    let deft = load_per_stratum(paths.deft.as_deref(), &strata, load_deft, |d| &d.stratum, "deft")?;
    if let Some(rows) = &deft {
        for row in rows {
            if row.deft.len() != strata.n_vars {
                return Err(Error::schema(format!(
                    "deft table: stratum {} has {} variables, strata table defines {}",
                    row.stratum,
                    row.deft.len(),
                    strata.n_vars
                )));
            }
        }
    }
    let effst = load_per_stratum(paths.effst.as_deref(), &strata, load_effst, |d| &d.stratum, "effst")?;
    if let Some(rows) = &effst {
        for row in rows {
            if row.effst.len() != strata.n_vars {
                return Err(Error::schema(format!(
                    "effst table: stratum {} has {} variables, strata table defines {}",
                    row.stratum,
                    row.effst.len(),
                    strata.n_vars
                )));
            }
        }
    }

    Ok(DesignInputs {
        strata,
        constraints,
        psus,
        design,
        rho,
        deft,
        effst,
    })
}

fn load_per_stratum<T>(
    path: Option<&Path>,
    strata: &StrataTable,
    loader: fn(&Path) -> Result<Vec<T>>,
    key: fn(&T) -> &String,
    what: &str,
) -> Result<Option<Vec<T>>> {
    let Some(path) = path else { return Ok(None) };
    let rows = loader(path)?;
    for row in &rows {
        if strata.index_of(key(row)).is_none() {
            return Err(Error::Reference(format!(
                "{}: {} table references unknown stratum {}",
                path.display(),
                what,
                key(row)
            )));
        }
    }
    for s in &strata.strata {
        if !rows.iter().any(|r| key(r) == &s.id) {
            return Err(Error::Reference(format!(
                "{}: {} table missing stratum {}",
                path.display(),
                what,
                s.id
            )));
        }
    }
    Ok(Some(rows))
}

/// Format a float the way all output files do: Rust's shortest
/// round-trippable representation, with negative zero normalised.
pub fn format_f64(v: f64) -> String {
    debug_assert!(v.is_finite(), "non-finite value in output: {v}");
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

/// Write a CSV file with the given header and stringified rows.
pub fn write_csv(path: &Path, headers: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::FileWrite {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    w.write_record(headers)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a strata table back out (used by the check and prepare steps).
pub fn write_strata(path: &Path, table: &StrataTable) -> Result<()> {
    let mut headers: Vec<String> = vec!["STRATUM".into(), "N".into()];
    for j in 1..=table.n_vars {
        headers.push(format!("M{j}"));
    }
    for j in 1..=table.n_vars {
        headers.push(format!("S{j}"));
    }
    headers.push("COST".into());
    headers.push("CENS".into());
    for k in 1..=table.n_domain_types {
        headers.push(format!("DOM{k}"));
    }
    let header_refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = table
        .strata
        .iter()
        .map(|s| {
            let mut row = vec![s.id.clone(), s.pop.to_string()];
            row.extend(s.means.iter().map(|v| format_f64(*v)));
            row.extend(s.stdevs.iter().map(|v| format_f64(*v)));
            row.push(format_f64(s.cost));
            row.push(if s.census { "1".into() } else { "0".into() });
            row.extend(s.domains.iter().cloned());
            row
        })
        .collect();
    write_csv(path, &header_refs, &rows)
}
