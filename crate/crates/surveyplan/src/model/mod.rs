//! Input model: tables, CSV parsing, cross-file checks, domain resolution.
//!
//! The interchange format is CSV throughout. Column conventions follow the
//! usual survey-planning layout: a strata table (`STRATUM, N, M1..MJ,
//! S1..SJ, COST, CENS, DOM1..DOMK`), a precision table (`DOM, CV1..CVJ`), a
//! PSU table (`PSU_ID, STRATUM, PSU_MOS`), per-stratum design parameters
//! (`STRATUM, DELTA, MINIMUM`), and optional per-variable cluster tables
//! (`RHO_AR*/RHO_NAR*`, `DEFT*`, `EFFST*`).

mod check;
mod csv_io;
mod domains;
mod records;

pub use check::{check_input, CheckReport, CheckRow};
pub use csv_io::{
    format_f64, load_constraints, load_design, load_deft, load_effst, load_inputs, load_psus,
    load_rho, load_strata, write_csv, write_strata, InputPaths,
};
pub use domains::{build_layout, resolve_constraints, validate_domains, DomainConstraint, DomainLayout};
pub use records::{
    AllocationResult, CvRow, DeftRow, DeftTraceRow, DesignInputs, DesignParams, EffstRow,
    IterationRow, PrecisionConstraints, PsuRecord, RhoRow, SensitivityRow, StratumAllocation,
    StratumInfo, StrataTable,
};
