//! From a unit-level register to allocator inputs.
//!
//! When the sampling frame is itself a register with the target variables
//! on it (think: planning next year's survey from this year's archive),
//! every allocator input can be computed instead of guessed: stratum
//! sizes, means and spreads, the within-PSU homogeneity of each variable,
//! and a starting design effect. Run with
//!
//!     cargo run --example prepare_from_frame

use surveyplan::frame::{prepare_inputs_scenario1, synth_frame, SynthSpec};

fn main() -> surveyplan::Result<()> {
    // A synthetic register: 4 strata x 12 municipalities, one binary and
    // one quantitative variable, mild municipality-level effects.
    let spec = SynthSpec {
        strata: 4,
        psus_per_stratum: 12,
        units_per_psu: (150, 600),
        binary_vars: 1,
        quant_vars: 1,
        psu_effect: 0.4,
        domains: 2,
    };
    let frame = synth_frame(&spec, 20260815);
    println!("frame: {} units, columns {:?}\n", frame.len(), frame.headers);

    let binary = [true, false];
    let prep = prepare_inputs_scenario1(&frame, &binary, 1.0, 12, true, None)?;

    println!("{:>8} {:>7} {:>8} {:>8} {:>8} {:>8}", "stratum", "N", "mean1", "sd1", "mean2", "sd2");
    for s in &prep.strata.strata {
        println!(
            "{:>8} {:>7} {:>8.4} {:>8.4} {:>8.1} {:>8.1}",
            s.id, s.pop, s.means[0], s.stdevs[0], s.means[1], s.stdevs[1]
        );
    }

    println!("\nwithin-municipality homogeneity (sampled part):");
    for r in &prep.rho {
        println!("  {:>8}: rate {:>7.4}   amount {:>7.4}", r.stratum, r.rho_nsr[0], r.rho_nsr[1]);
    }

    if let Some(deft) = &prep.deft {
        println!("\nsuggested starting design effects at 12 interviews per PSU:");
        for d in deft {
            println!("  {:>8}: {:.3}  {:.3}", d.stratum, d.deft[0], d.deft[1]);
        }
    }

    println!("\n{} PSUs written to the PSU table; design file says delta=1, minimum=12", prep.psus.len());
    Ok(())
}
