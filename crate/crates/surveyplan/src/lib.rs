//! Sample design toolkit for one- and two-stage stratified surveys.
//!
//! The crate covers the full planning workflow for household-style surveys:
//!
//! 1. **Frame preparation** ([`frame`]) — turn a unit-level sampling frame
//!    into per-stratum summaries (sizes, means, standard deviations),
//!    intraclass correlations of the clustering variables, and estimator
//!    effect factors.
//! 2. **Multivariate allocation** ([`allocation`]) — minimise total
//!    interviewing cost subject to coefficient-of-variation ceilings on
//!    several target estimates over several overlapping domains, via a
//!    convex fixed-point solver, plus the classical baselines (equal,
//!    proportional, optimal, cost-weighted optimal).
//! 3. **Two-stage extension** ([`twostage`]) — iterate the allocation with
//!    design-effect inflation for cluster (PSU) sampling: self-representing
//!    vs. sampled PSUs, thresholds on the measure of size, and a stop rule
//!    on allocation stability.
//! 4. **Sample selection** ([`selection`]) — certainty inclusion of
//!    self-representing PSUs, Sampford's rejective PPS without replacement
//!    inside sub-strata of the remaining PSUs, and circular systematic
//!    selection of final-stage units, with exact design weights.
//! 5. **Monte Carlo evaluation** ([`evaluate`]) — repeated selection from a
//!    frame to measure empirical coefficients of variation against the
//!    planned ceilings.
//!
//! Every stochastic step takes an explicit `u64` seed and derives
//! per-entity substreams ([`rng`]), so runs are reproducible byte-for-byte
//! regardless of thread count.
//!
//! # Where to start
//!
//! The `examples/` directory is the front door; each file is runnable on
//! its own and prints what it does:
//!
//! * `baseline_allocations` — equal / proportional / optimal splits of a
//!   fixed sample size (`cargo run --example baseline_allocations`)
//! * `one_stage_allocation` — cost-minimal allocation under CV ceilings
//! * `two_stage_allocation` — the clustered design iteration, with trace
//! * `minimum_sensitivity` — how the per-PSU workload floor moves the
//!   PSU/SSU totals
//! * `select_sample` — PSU and SSU selection with design weights
//! * `evaluate_design` — Monte Carlo check of planned precision
//! * `prepare_from_frame` — frame-to-inputs preparation (register scenario)
//! * `full_pipeline` — everything end to end through CSV files, as the CLI
//!   drives it
//!
//! A thin binary (`surveyplan`) exposes the same steps as subcommands over
//! CSV files; `surveyplan --help` lists them.

pub mod allocation;
pub mod error;
pub mod evaluate;
pub mod frame;
pub mod model;
pub mod plot;
pub mod report;
pub mod rng;
pub mod selection;
pub mod twostage;

pub mod cli;

pub use error::{Error, Result};
