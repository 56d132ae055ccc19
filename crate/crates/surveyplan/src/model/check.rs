//! Coherence check between the strata table and the PSU table.
//!
//! Two-stage planning needs the stratum population N_h and the sum of its
//! PSU measures of size to agree; frames and registers often disagree by a
//! few units. The check reports the discrepancy per stratum and returns a
//! corrected strata table with N_h replaced by the PSU total, which is the
//! quantity selection actually operates on. Running the check on its own
//! output is a no-op.

use crate::error::{Error, Result};
use crate::model::records::{PsuRecord, StrataTable};

/// One per-stratum comparison row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRow {
    pub stratum: String,
    /// N from the strata table.
    pub n_strata: u64,
    /// Sum of PSU measures of size.
    pub n_psu: u64,
    /// Number of PSUs in the stratum.
    pub psu_count: u64,
    /// `n_psu - n_strata`.
    pub discrepancy: i64,
}

/// Result of [`check_input`].
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
    /// Strata table with N_h set to the PSU totals.
    pub corrected: StrataTable,
}

impl CheckReport {
    pub fn is_coherent(&self) -> bool {
        self.rows.iter().all(|r| r.discrepancy == 0)
    }
}

/// Compare `strata` against `psus` and return the report plus a corrected
/// table. Fails if a PSU references a stratum that does not exist or if a
/// stratum has no PSUs at all (nothing could ever be selected from it).
pub fn check_input(strata: &StrataTable, psus: &[PsuRecord]) -> Result<CheckReport> {
    for p in psus {
        if strata.index_of(&p.stratum).is_none() {
            return Err(Error::Reference(format!(
                "PSU {} references stratum {} absent from the strata table",
                p.id, p.stratum
            )));
        }
    }
    let mut corrected = strata.clone();
    let mut rows = Vec::with_capacity(strata.len());
    for (h, s) in strata.strata.iter().enumerate() {
        let mut total: u64 = 0;
        let mut count: u64 = 0;
        for p in psus.iter().filter(|p| p.stratum == s.id) {
            total += p.mos;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Reference(format!(
                "stratum {} has no PSUs in the PSU table",
                s.id
            )));
        }
        let discrepancy = total as i64 - s.pop as i64;
        if discrepancy != 0 {
            log::warn!(
                "stratum {}: N={} vs PSU total {}; corrected to the PSU total",
                s.id,
                s.pop,
                total
            );
        }
        corrected.strata[h].pop = total;
        rows.push(CheckRow {
            stratum: s.id.clone(),
            n_strata: s.pop,
            n_psu: total,
            psu_count: count,
            discrepancy,
        });
    }
    Ok(CheckReport { rows, corrected })
}
