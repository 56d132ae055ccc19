//! Drawing the actual sample once an allocation is settled.
//!
//! The first stage takes every PSU above its stratum's size threshold
//! outright, groups the rest into sub-strata of comparable cumulated
//! size, and draws a fixed number from each group proportional to size
//! ([`sampford_select`], a rejective scheme whose inclusion
//! probabilities are exact). The second stage walks each selected PSU's
//! frame rows with a fractional-step circular systematic pass. Both
//! stages key their random streams by entity labels, so a draw is
//! reproducible from the seed alone and insensitive to thread count.

pub mod psu;
pub mod sampford;
pub mod ssu;
pub mod substrata;

pub use psu::{select_psu, PsuSelection, SelectedPsu, StratumPsuStats, UniversePsu};
pub use sampford::{pps_inclusion, resolve_certainties, sampford_select};
pub use ssu::{select_ssu, systematic_positions, SelectedSsu};
pub use substrata::{build_substrata, SubStratum};
