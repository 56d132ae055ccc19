//! Rejective probability-proportional-to-size sampling.
//!
//! The draw keeps resampling until it produces `m` distinct units, with
//! the first unit drawn proportional to size and the remaining `m - 1`
//! proportional to size inflated by 1/(1 - pi). Accepted samples then
//! have first-order inclusion probabilities exactly pi_l = m·s_l/Σs —
//! not approximately, which is what makes design weights 1/pi honest.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;

use crate::error::{Error, Result};

/// First-order inclusion probabilities of a PPS draw of `m` units:
/// pi_l = m·s_l/Σs. Values at or above 1 signal units that must be
/// promoted to certainties before drawing.
pub fn pps_inclusion(sizes: &[u64], m: u64) -> Vec<f64> {
    let total: u64 = sizes.iter().sum();
    sizes.iter().map(|&s| m as f64 * s as f64 / total as f64).collect()
}

/// Split a pool into certainty selections and a residual draw.
///
/// Any unit whose inclusion probability reaches 1 is selected outright
/// and the draw size drops by one; this repeats until every remaining
/// probability is strictly below 1 (or nothing is left to draw).
/// Returns the certainty positions and the residual draw count.
pub fn resolve_certainties(sizes: &[u64], m: u64) -> (Vec<usize>, u64) {
    let mut certain = Vec::new();
    let mut pool: Vec<usize> = (0..sizes.len()).collect();
    let mut m = m;
    while m > 0 && !pool.is_empty() {
        let total: u64 = pool.iter().map(|&i| sizes[i]).sum();
        let over: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| m as f64 * sizes[i] as f64 / total as f64 >= 1.0 - 1e-12)
            .collect();
        if over.is_empty() {
            break;
        }
        // At most m units can hold a 1/m-th of the pool each, so the
        // residual draw size never goes negative.
        m -= over.len() as u64;
        pool.retain(|i| !over.contains(i));
        certain.extend(over);
    }
    (certain, m)
}

/// Draw `m` distinct positions with inclusion probabilities exactly
/// proportional to `sizes`.
///
/// Every pi_l = m·s_l/Σs must be strictly below 1; callers holding units
/// at or above 1 promote them via [`resolve_certainties`] first.
pub fn sampford_select<R: Rng>(sizes: &[u64], m: u64, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if m as usize > sizes.len() {
        return Err(Error::invalid(format!(
            "cannot draw {m} PSUs from a pool of {}",
            sizes.len()
        )));
    }
    if sizes.iter().all(|&s| s == 0) {
        return Err(Error::invalid("all sizes are zero"));
    }
    let pi = pps_inclusion(sizes, m);
    if let Some(l) = pi.iter().position(|&p| p >= 1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "unit {l} has inclusion probability {:.6} >= 1; promote certainties first",
            pi[l]
        )));
    }

    let first = WeightedIndex::new(sizes.iter().map(|&s| s as f64))
        .map_err(|e| Error::invalid(format!("bad size weights: {e}")))?;
    if m == 1 {
        return Ok(vec![first.sample(rng)]);
    }
    let rest = WeightedIndex::new(sizes.iter().zip(&pi).map(|(&s, &p)| s as f64 / (1.0 - p)))
        .map_err(|e| Error::invalid(format!("bad rejective weights: {e}")))?;

    const MAX_ATTEMPTS: u32 = 1_000_000;
    let mut picked = Vec::with_capacity(m as usize);
    for _ in 0..MAX_ATTEMPTS {
        picked.clear();
        picked.push(first.sample(rng));
        for _ in 1..m {
            picked.push(rest.sample(rng));
        }
        picked.sort_unstable();
        let distinct = picked.windows(2).all(|w| w[0] != w[1]);
        if distinct {
            return Ok(picked);
        }
    }
    Err(Error::Convergence(format!(
        "rejective PPS draw of {m} from {} units found no distinct sample in {MAX_ATTEMPTS} attempts",
        sizes.len()
    )))
}
