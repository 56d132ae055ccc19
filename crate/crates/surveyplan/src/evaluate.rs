//! Monte Carlo check of a planned design against a real frame.
//!
//! The planner's coefficients of variation rest on modelled variances
//! and design effects. Drawing the sample many times from the actual
//! frame and watching the estimates scatter replaces that model with
//! evidence: the empirical CV of a domain mean over replicates is what
//! the survey will actually deliver.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::{DesignParams, PsuRecord, StrataTable};
use crate::rng;
use crate::selection::{select_psu, select_ssu};

/// Expansion estimate of a domain mean: sum of weighted observations
/// over the domain's true population size. `None` when the sample holds
/// no units of the domain.
pub fn estimate_mean(values: &[f64], weights: &[f64], pop: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    debug_assert_eq!(values.len(), weights.len());
    Some(values.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / pop)
}

/// Replication settings.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Number of replicate samples (at least 2, or no scatter exists).
    pub nsampl: usize,
    /// Redraw the PSUs in every replicate. Turning this off freezes one
    /// first-stage draw and measures only the second-stage scatter.
    pub redraw_psu: bool,
    /// PSUs drawn per sub-stratum group (as used in planning).
    pub min_psu_strat: u64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { nsampl: 500, redraw_psu: true, min_psu_strat: 2, seed: 0 }
    }
}

/// Replicate scatter of one domain's estimates.
#[derive(Debug, Clone)]
pub struct DomainEstimate {
    pub domain: String,
    /// Domain population size in the frame.
    pub pop: u64,
    /// True domain means per variable, straight from the frame.
    pub pop_mean: Vec<f64>,
    /// Mean of the replicate estimates per variable.
    pub mean: Vec<f64>,
    /// Empirical CV per variable: sd of estimates (n−1) over |mean|.
    pub cv: Vec<f64>,
    /// Replicates whose sample held no unit of this domain.
    pub dropped: usize,
}

/// Result of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub nsampl: usize,
    pub rows: Vec<DomainEstimate>,
}

/// Draw `nsampl` two-stage samples from the frame under the given design
/// and allocation, and report the empirical CV of every domain mean.
///
/// Replicates run in parallel; each one keys its PSU and SSU draws by
/// its own index, so the report depends only on the seed, never on the
/// thread count. Domain categories come from the frame's domain column
/// (a single `POP` when there is none).
pub fn eval_2stage(
    frame: &Frame,
    strata: &StrataTable,
    psus: &[PsuRecord],
    design: &[DesignParams],
    alloc: &[u64],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if opts.nsampl < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 replicates to measure scatter (got {})",
            opts.nsampl
        )));
    }
    let n_vars = frame.targets.len();
    let categories = frame.domain_categories();
    // Category index per frame row.
    let cat_of: Vec<usize> = match &frame.domain {
        None => vec![0; frame.len()],
        Some(col) => col
            .iter()
            .map(|c| categories.iter().position(|x| x == c).unwrap())
            .collect(),
    };
    let mut pops = vec![0u64; categories.len()];
    for &c in &cat_of {
        pops[c] += 1;
    }
    let mut pop_means = vec![vec![0.0; n_vars]; categories.len()];
    for (i, &c) in cat_of.iter().enumerate() {
        for j in 0..n_vars {
            pop_means[c][j] += frame.targets[j][i];
        }
    }
    for (c, row) in pop_means.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= pops[c] as f64;
        }
    }

    // One frozen first stage when PSUs are not redrawn.
    let fixed = if opts.redraw_psu {
        None
    } else {
        Some(select_psu(strata, psus, design, alloc, opts.min_psu_strat, opts.seed)?)
    };

    // estimates[r][cat][var]; None marks an empty domain in replicate r.
    let estimates: Vec<Vec<Option<Vec<f64>>>> = (0..opts.nsampl)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<Vec<f64>>>> {
            let drawn;
            let first = match &fixed {
                Some(sel) => sel,
                None => {
                    let seed = rng::derive_seed(opts.seed, "eval-psu", &r.to_string());
                    drawn = select_psu(strata, psus, design, alloc, opts.min_psu_strat, seed)?;
                    &drawn
                }
            };
            let seed = rng::derive_seed(opts.seed, "eval-ssu", &r.to_string());
            let units = select_ssu(frame, &first.sample, seed)?;

            let mut num = vec![vec![0.0; n_vars]; categories.len()];
            let mut seen = vec![false; categories.len()];
            for u in &units {
                let c = cat_of[u.row];
                seen[c] = true;
                for j in 0..n_vars {
                    num[c][j] += frame.targets[j][u.row] * u.weight;
                }
            }
            Ok(categories
                .iter()
                .enumerate()
                .map(|(c, _)| {
                    seen[c].then(|| num[c].iter().map(|&s| s / pops[c] as f64).collect())
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(categories.len());
    for (c, cat) in categories.iter().enumerate() {
        let kept: Vec<&Vec<f64>> = estimates.iter().filter_map(|r| r[c].as_ref()).collect();
        let dropped = opts.nsampl - kept.len();
        if dropped > 0 {
            warn!("domain {cat}: {dropped} of {} replicates held no units", opts.nsampl);
        }
        let mut mean = vec![f64::NAN; n_vars];
        let mut cv = vec![f64::NAN; n_vars];
        if kept.len() >= 2 {
            for j in 0..n_vars {
                let m = kept.iter().map(|e| e[j]).sum::<f64>() / kept.len() as f64;
                let ss = kept.iter().map(|e| (e[j] - m) * (e[j] - m)).sum::<f64>();
                let sd = (ss / (kept.len() - 1) as f64).sqrt();
                mean[j] = m;
                cv[j] = if m != 0.0 { sd / m.abs() } else { f64::NAN };
            }
        } else {
            warn!("domain {cat}: too few non-empty replicates to measure scatter");
        }
        rows.push(DomainEstimate {
            domain: cat.clone(),
            pop: pops[c],
            pop_mean: pop_means[c].clone(),
            mean,
            cv,
            dropped,
        });
    }
    Ok(EvalReport { nsampl: opts.nsampl, rows })
}
