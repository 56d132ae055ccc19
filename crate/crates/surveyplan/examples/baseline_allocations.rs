//! The classical fixed-total allocations, side by side.
//!
//! Splits an interviewer budget of n = 1000 over four strata by equal
//! shares, proportionally to size, by Neyman's minimum-variance rule, and
//! by the cost-weighted variant under unequal interview costs. Run with
//!
//!     cargo run --example baseline_allocations

use surveyplan::allocation::{
    alloc_neyman, alloc_neyman_cost, alloc_proportional, alloc_uniform,
};

fn main() -> surveyplan::Result<()> {
    let pops: [u64; 4] = [12_000, 45_000, 3_000, 90_000];
    let stdevs = [1.8, 0.9, 4.0, 0.6];
    let costs = [1.0, 1.0, 2.5, 0.8]; // stratum 3 is remote and expensive
    let n = 1_000;

    let equal = alloc_uniform(n, &pops)?;
    let prop = alloc_proportional(n, &pops)?;
    let neyman = alloc_neyman(n, &pops, &stdevs)?;
    // Give the cost-weighted plan the same money the Neyman plan spends.
    let budget: f64 = neyman.iter().zip(&costs).map(|(&n, &c)| n as f64 * c).sum();
    let weighted = alloc_neyman_cost(budget, 0.0, &pops, &stdevs, &costs)?;

    println!("budget for the cost-weighted plan: {budget:.0}");
    println!("{:>7} {:>8} {:>6} {:>6} {:>6} {:>6}", "stratum", "N", "equal", "prop", "neyman", "cost");
    for h in 0..pops.len() {
        println!(
            "{:>7} {:>8} {:>6} {:>6} {:>6} {:>6}",
            h + 1,
            pops[h],
            equal[h],
            prop[h],
            neyman[h],
            weighted[h]
        );
    }
    println!(
        "{:>7} {:>8} {:>6} {:>6} {:>6} {:>6}",
        "total",
        pops.iter().sum::<u64>(),
        equal.iter().sum::<u64>(),
        prop.iter().sum::<u64>(),
        neyman.iter().sum::<u64>(),
        weighted.iter().sum::<u64>()
    );

    // Neyman piles interviews on the small, noisy stratum 3; the cost
    // weight pulls some of them back out because each costs 2.5 there.
    Ok(())
}
