//! Classical fixed-total allocations: equal, proportional, minimum-variance
//! and cost-weighted minimum-variance.
//!
//! All of them integerise with the same apportionment rule: every stratum
//! starts at one unit, the rest follows the target quotas by largest
//! remainder (ties to the earlier stratum), and no stratum ever exceeds its
//! population. Totals are hit exactly.

use crate::error::{Error, Result};

/// Distribute `total` units over strata with proportionality targets
/// `quotas`, a floor of one unit each and per-stratum caps.
fn apportion(quotas: &[f64], total: u64, caps: &[u64]) -> Result<Vec<u64>> {
    let l = quotas.len();
    if l == 0 {
        return Err(Error::Invalid("no strata".into()));
    }
    if total < l as u64 {
        return Err(Error::Infeasible(format!(
            "cannot give each of {l} strata at least one unit out of {total}"
        )));
    }
    let cap_sum: u64 = caps.iter().sum();
    if total > cap_sum {
        return Err(Error::Infeasible(format!(
            "sample of {total} exceeds population of {cap_sum}"
        )));
    }
    let mut out: Vec<u64> = vec![1; l];
    let mut fixed: Vec<bool> = caps.iter().map(|&c| c <= 1).collect();
    let mut remaining = total - l as u64;
    // Rescale quotas over the unfixed strata until nothing overflows.
    while remaining > 0 {
        let qsum: f64 = quotas
            .iter()
            .zip(&fixed)
            .filter(|(_, f)| !**f)
            .map(|(q, _)| q.max(0.0))
            .sum();
        if qsum <= 0.0 {
            // Degenerate quotas: spread evenly over whatever still has room.
            let room: Vec<usize> = (0..l).filter(|&h| !fixed[h]).collect();
            if room.is_empty() {
                return Err(Error::Infeasible("no capacity left to apportion".into()));
            }
            for &h in room.iter().cycle().take(remaining as usize) {
                out[h] += 1; // caps re-checked below
            }
            remaining = 0;
            for h in 0..l {
                if out[h] > caps[h] {
                    remaining += out[h] - caps[h];
                    out[h] = caps[h];
                    fixed[h] = true;
                }
            }
            continue;
        }
        let mut share: Vec<f64> = vec![0.0; l];
        for h in 0..l {
            if !fixed[h] {
                share[h] = quotas[h].max(0.0) / qsum * remaining as f64;
            }
        }
        let mut add: Vec<u64> = share.iter().map(|s| s.floor() as u64).collect();
        let mut given: u64 = add.iter().sum();
        // Largest fractional remainders take the leftover units.
        let mut order: Vec<usize> = (0..l).filter(|&h| !fixed[h]).collect();
        order.sort_by(|&a, &b| {
            let fa = share[a] - share[a].floor();
            let fb = share[b] - share[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let mut it = order.iter().cycle();
        while given < remaining {
            let &h = it.next().unwrap();
            add[h] += 1;
            given += 1;
        }
        remaining = 0;
        for h in 0..l {
            out[h] += add[h];
            if out[h] > caps[h] {
                remaining += out[h] - caps[h];
                out[h] = caps[h];
                fixed[h] = true;
            }
        }
    }
    debug_assert_eq!(out.iter().sum::<u64>(), total);
    Ok(out)
}

/// Equal shares: `n` units over `pops.len()` strata, remainder to the
/// earlier strata. Requires `pops.len() <= n <= sum(pops)`.
pub fn alloc_uniform(n: u64, pops: &[u64]) -> Result<Vec<u64>> {
    apportion(&vec![1.0; pops.len()], n, pops)
}

/// Proportional to population size.
pub fn alloc_proportional(n: u64, pops: &[u64]) -> Result<Vec<u64>> {
    let quotas: Vec<f64> = pops.iter().map(|&p| p as f64).collect();
    apportion(&quotas, n, pops)
}

/// Minimum-variance allocation for one variable: proportional to
/// `N_h * S_h`. Strata with zero spread still get their floor unit.
pub fn alloc_neyman(n: u64, pops: &[u64], stdevs: &[f64]) -> Result<Vec<u64>> {
    if pops.len() != stdevs.len() {
        return Err(Error::Invalid("pops and stdevs differ in length".into()));
    }
    let quotas: Vec<f64> = pops
        .iter()
        .zip(stdevs)
        .map(|(&p, &s)| p as f64 * s)
        .collect();
    if quotas.iter().all(|q| *q == 0.0) {
        log::warn!("all strata have zero spread; falling back to proportional");
        return alloc_proportional(n, pops);
    }
    apportion(&quotas, n, pops)
}

/// Minimum-variance allocation under a cost budget: continuous optimum is
/// proportional to `N_h * S_h / sqrt(c_h)` scaled so that
/// `sum_h c_h * n_h = budget - fixed_cost`; integerisation never overspends
/// and leaves less than one unit cost unused where affordable.
pub fn alloc_neyman_cost(
    budget: f64,
    fixed_cost: f64,
    pops: &[u64],
    stdevs: &[f64],
    costs: &[f64],
) -> Result<Vec<u64>> {
    let l = pops.len();
    if stdevs.len() != l || costs.len() != l {
        return Err(Error::Invalid("pops, stdevs and costs differ in length".into()));
    }
    if costs.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Invalid("unit costs must be positive".into()));
    }
    let avail = budget - fixed_cost;
    let min_cost: f64 = costs.iter().sum();
    if avail < min_cost {
        return Err(Error::Infeasible(format!(
            "budget {avail} cannot cover one unit per stratum (needs {min_cost})"
        )));
    }
    let w: Vec<f64> = (0..l)
        .map(|h| pops[h] as f64 * stdevs[h] / costs[h].sqrt())
        .collect();
    let denom: f64 = (0..l)
        .map(|h| pops[h] as f64 * stdevs[h] * costs[h].sqrt())
        .sum();
    let cont: Vec<f64> = if denom > 0.0 {
        w.iter().map(|wh| avail * wh / denom).collect()
    } else {
        // Zero spread everywhere: spend the budget proportionally to size.
        let tot: f64 = (0..l).map(|h| pops[h] as f64 * costs[h]).collect::<Vec<_>>().iter().sum();
        (0..l).map(|h| avail * pops[h] as f64 / tot).collect()
    };
    // Start at the floor of one unit per stratum, then spend what remains:
    // floor of the continuous optimum first, then greedily by fractional
    // remainder among the strata whose next unit is still affordable.
    let mut out: Vec<u64> = vec![1; l];
    let mut spent: f64 = costs.iter().sum();
    for h in 0..l {
        let extra = (cont[h].min(pops[h] as f64) - 1.0).floor().max(0.0) as u64;
        let extra = extra.min(pops[h] - 1);
        let affordable = ((avail - spent) / costs[h]).floor().max(0.0) as u64;
        let extra = extra.min(affordable);
        out[h] += extra;
        spent += extra as f64 * costs[h];
    }
    loop {
        let mut best: Option<(f64, usize)> = None;
        for h in 0..l {
            if out[h] < pops[h] && spent + costs[h] <= avail + 1e-9 {
                let frac = cont[h] - out[h] as f64;
                if best.map_or(true, |(bf, bh)| frac > bf || (frac == bf && h < bh)) {
                    best = Some((frac, h));
                }
            }
        }
        match best {
            Some((_, h)) => {
                out[h] += 1;
                spent += costs[h];
            }
            None => break,
        }
    }
    Ok(out)
}
