//! Two-stage (cluster) extension of the allocation problem.
//!
//! Selecting households inside sampled municipalities loses precision
//! relative to a direct sample of the same size; the loss is the design
//! effect `deff = 1 + rho (b - 1)`, driven by the intraclass correlation
//! rho and the average cluster take b. The planning loop here:
//!
//! 1. solves the one-stage problem (iteration 0);
//! 2. splits each stratum's PSUs into a self-representing part (measure of
//!    size above a workload threshold — those PSUs are strata of their own
//!    and always in the sample) and a sampled part;
//! 3. computes a per-stratum, per-variable design effect for that
//!    structure, inflates the unit deviations by `deft * sqrt(effst)`, and
//!    re-solves;
//! 4. repeats until the allocation stabilises (SSU total moves by less
//!    than 5, or no deft moves by 0.06 or more, or 20 iterations).
//!
//! [`cluster`] holds the scalar design-effect algebra, [`algorithm`] the
//! loop, [`sensitivity`] the workload-floor exploration grid.

pub mod algorithm;
pub mod cluster;
pub mod sensitivity;

pub use algorithm::{beat_2st, stratum_states, StopRule, TwoStageOptions, TwoStageState};
pub use cluster::{
    compute_threshold, deff_extended, deff_simple, deviance_decomposition, effst_compute,
    rho_from_population, rho_from_sample, split_sr_nsr, SrNsrSplit,
};
pub use sensitivity::{sensitivity_min_ssu, MinimumSensitivityRow};
