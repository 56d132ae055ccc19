//! Unit-level sampling frames: loading, summarising, synthesising.
//!
//! A frame is a CSV with one row per elementary unit carrying at least a
//! unit id, a PSU id and a stratum; target variables, a domain column and
//! a weight column are optional and named by the caller (column names in
//! frames vary too much for fixed conventions to work).

pub mod prepare;
pub mod stats;
pub mod synth;

pub use prepare::{prepare_inputs_scenario1, PreparedInputs};
pub use stats::{stratum_stats_register, stratum_stats_survey, VarMoments};
pub use synth::{synth_frame, SynthSpec};

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Which frame columns play which role.
#[derive(Debug, Clone, Default)]
pub struct FrameColumns {
    pub unit_id: String,
    pub psu_id: String,
    pub stratum: String,
    /// Target variable columns, in the order they become V1..VJ.
    pub targets: Vec<String>,
    pub domain: Option<String>,
    pub weight: Option<String>,
}

/// A loaded frame: raw records for echoing into outputs plus typed views
/// of the designated columns.
#[derive(Debug, Clone)]
pub struct Frame {
    pub headers: Vec<String>,
    pub records: Vec<csv::StringRecord>,
    pub unit_id: Vec<String>,
    pub psu_id: Vec<String>,
    pub stratum: Vec<String>,
    /// `targets[j][row]`.
    pub targets: Vec<Vec<f64>>,
    pub domain: Option<Vec<String>>,
    pub weight: Option<Vec<f64>>,
    /// Row indices per PSU, in frame order.
    pub by_psu: BTreeMap<String, Vec<usize>>,
    /// Distinct stratum ids in order of first appearance.
    pub strata_order: Vec<String>,
}

/// One row of a frame, borrowed.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow<'a> {
    pub unit_id: &'a str,
    pub psu_id: &'a str,
    pub stratum: &'a str,
    pub targets: Vec<f64>,
    pub domain: Option<&'a str>,
    pub weight: Option<f64>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.unit_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit_id.is_empty()
    }

    pub fn row(&self, i: usize) -> FrameRow<'_> {
        FrameRow {
            unit_id: &self.unit_id[i],
            psu_id: &self.psu_id[i],
            stratum: &self.stratum[i],
            targets: self.targets.iter().map(|col| col[i]).collect(),
            domain: self.domain.as_ref().map(|d| d[i].as_str()),
            weight: self.weight.as_ref().map(|w| w[i]),
        }
    }

    /// Distinct domain categories in order of first appearance; a single
    /// `POP` category when no domain column was designated.
    pub fn domain_categories(&self) -> Vec<String> {
        match &self.domain {
            None => vec!["POP".to_string()],
            Some(col) => {
                let mut seen = Vec::new();
                for v in col {
                    if !seen.contains(v) {
                        seen.push(v.clone());
                    }
                }
                seen
            }
        }
    }

    /// Write the frame back to CSV (original columns, original order).
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::FileWrite {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
        w.write_record(&self.headers)?;
        for rec in &self.records {
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Load a frame CSV, typing the designated columns.
pub fn load_frame(path: &Path, cols: &FrameColumns) -> Result<Frame> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::FileRead {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let file = path.display().to_string();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::schema(format!("{file}: missing column {name}")))
    };
    let c_unit = find(&cols.unit_id)?;
    let c_psu = find(&cols.psu_id)?;
    let c_str = find(&cols.stratum)?;
    let c_targets: Vec<usize> = cols.targets.iter().map(|t| find(t)).collect::<Result<_>>()?;
    let c_domain = cols.domain.as_ref().map(|d| find(d)).transpose()?;
    let c_weight = cols.weight.as_ref().map(|w| find(w)).transpose()?;

    let mut frame = Frame {
        headers,
        records: Vec::new(),
        unit_id: Vec::new(),
        psu_id: Vec::new(),
        stratum: Vec::new(),
        targets: vec![Vec::new(); c_targets.len()],
        domain: c_domain.map(|_| Vec::new()),
        weight: c_weight.map(|_| Vec::new()),
        by_psu: BTreeMap::new(),
        strata_order: Vec::new(),
    };
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("").to_string();
        let row = frame.records.len();
        frame.unit_id.push(get(c_unit));
        let psu = get(c_psu);
        frame.by_psu.entry(psu.clone()).or_default().push(row);
        frame.psu_id.push(psu);
        let stratum = get(c_str);
        if !frame.strata_order.contains(&stratum) {
            frame.strata_order.push(stratum.clone());
        }
        frame.stratum.push(stratum);
        for (j, &c) in c_targets.iter().enumerate() {
            let raw = get(c);
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse_at(&file, r + 1, &cols.targets[j], format!("not a number: {raw:?}"))
            })?;
            frame.targets[j].push(v);
        }
        if let (Some(c), Some(col)) = (c_domain, frame.domain.as_mut()) {
            col.push(get(c));
        }
        if let (Some(c), Some(col)) = (c_weight, frame.weight.as_mut()) {
            let raw = get(c);
            let v: f64 = raw.parse().map_err(|_| {
                Error::parse_at(&file, r + 1, cols.weight.as_ref().unwrap(), format!("not a number: {raw:?}"))
            })?;
            if !(v > 0.0) {
                return Err(Error::parse_at(
                    &file,
                    r + 1,
                    cols.weight.as_ref().unwrap(),
                    "weights must be positive",
                ));
            }
            col.push(v);
        }
        frame.records.push(rec);
    }
    if frame.is_empty() {
        return Err(Error::schema(format!("{file}: frame has no rows")));
    }
    // A PSU must not straddle strata.
    for rows in frame.by_psu.values() {
        let first = &frame.stratum[rows[0]];
        if let Some(&bad) = rows.iter().find(|&&i| &frame.stratum[i] != first) {
            return Err(Error::schema(format!(
                "{file}: PSU {} appears in strata {} and {}",
                frame.psu_id[bad], first, frame.stratum[bad]
            )));
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn cols() -> FrameColumns {
        FrameColumns {
            unit_id: "id".into(),
            psu_id: "muni".into(),
            stratum: "str".into(),
            targets: vec!["emp".into(), "inc".into()],
            domain: Some("reg".into()),
            weight: None,
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_types_the_designated_columns() {
        let f = write_tmp(
            "id,muni,str,emp,inc,reg,extra\n\
             u1,m1,A,1,100.5,north,x\n\
             u2,m1,A,0,80,north,y\n\
             u3,m2,B,1,120,south,z\n",
        );
        let frame = load_frame(f.path(), &cols()).unwrap();
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.targets[0], vec![1.0, 0.0, 1.0]);
        assert_eq!(frame.targets[1], vec![100.5, 80.0, 120.0]);
        assert_eq!(frame.by_psu["m1"], vec![0, 1]);
        assert_eq!(frame.strata_order, vec!["A", "B"]);
        assert_eq!(frame.domain_categories(), vec!["north", "south"]);
        let r = frame.row(2);
        assert_eq!(r.unit_id, "u3");
        assert_eq!(r.targets, vec![1.0, 120.0]);
        assert_eq!(r.domain, Some("south"));
        // The untyped record keeps columns the roles didn't claim.
        assert_eq!(frame.records[0].get(6), Some("x"));
    }

    #[test]
    fn psu_straddling_two_strata_is_rejected() {
        let f = write_tmp("id,muni,str,emp,inc,reg\nu1,m1,A,1,1,n\nu2,m1,B,0,1,n\n");
        let err = load_frame(f.path(), &cols()).unwrap_err();
        assert!(err.to_string().contains("appears in strata"), "{err}");
    }

    #[test]
    fn missing_and_malformed_columns_point_at_the_culprit() {
        let f = write_tmp("id,muni,emp,inc,reg\nu1,m1,1,1,n\n");
        let err = load_frame(f.path(), &cols()).unwrap_err();
        assert!(err.to_string().contains("missing column str"), "{err}");

        let f = write_tmp("id,muni,str,emp,inc,reg\nu1,m1,A,one,1,n\n");
        let err = load_frame(f.path(), &cols()).unwrap_err();
        assert!(err.to_string().contains("column emp"), "{err}");
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn roundtrips_through_write() {
        let f = write_tmp("id,muni,str,emp,inc,reg\nu1,m1,A,1,100.5,n\nu2,m2,B,0,7,s\n");
        let frame = load_frame(f.path(), &cols()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        frame.write(out.path()).unwrap();
        let again = load_frame(out.path(), &cols()).unwrap();
        assert_eq!(frame.records, again.records);
    }
}
