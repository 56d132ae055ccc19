//! Grouping the sampled (non-self-representing) PSUs of a stratum into
//! sub-strata of comparable cumulated size before the PPS draw.
//!
//! Ordered by decreasing size, PSUs are dealt into consecutive groups;
//! each group closes once its cumulated measure of size reaches the
//! size threshold times its draw count, so every group carries roughly
//! the same share of the population per selected PSU. The last group
//! absorbs whatever remains. While a group is being filled, enough PSUs
//! are held back for the groups after it to cover their own draws, so
//! a draw of `m` from a group always has at least `m` candidates.

use crate::error::{Error, Result};

/// One sub-stratum: member positions into the caller's PSU slice and how
/// many of them to draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStratum {
    pub stratum: String,
    /// `<stratum>-G<k>` for draw groups (self-representing PSUs get
    /// their own `<stratum>-SR<k>` singletons elsewhere).
    pub label: String,
    /// Positions into the PSU slice handed to [`build_substrata`],
    /// ordered by decreasing size.
    pub members: Vec<usize>,
    /// PSUs to draw from this group.
    pub draw: u64,
    /// Cumulated size the group aimed for (threshold × draw).
    pub target: f64,
}

/// Partition the sampled PSUs of one stratum into draw groups.
///
/// `mos` lists the measure of size of each sampled PSU (any order),
/// `threshold` is the self-representing size cutoff, `total_draw` the
/// number of PSUs to select overall, and `min_psu` the draw per group:
/// `total_draw` splits into groups of `min_psu` plus one remainder
/// group. Ties in size break by position so the grouping is stable.
pub fn build_substrata(
    stratum: &str,
    mos: &[u64],
    threshold: f64,
    total_draw: u64,
    min_psu: u64,
) -> Result<Vec<SubStratum>> {
    if total_draw == 0 {
        return Ok(Vec::new());
    }
    if min_psu == 0 {
        return Err(Error::invalid("group draw size must be at least 1"));
    }
    if total_draw as usize > mos.len() {
        return Err(Error::invalid(format!(
            "stratum {stratum}: cannot select {total_draw} PSUs from {} sampled ones",
            mos.len()
        )));
    }

    let mut order: Vec<usize> = (0..mos.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(mos[i]), i));

    let mut draws = vec![min_psu; (total_draw / min_psu) as usize];
    if total_draw % min_psu > 0 {
        draws.push(total_draw % min_psu);
    }

    let mut groups = Vec::with_capacity(draws.len());
    let mut cursor = 0usize;
    for (g, &draw) in draws.iter().enumerate() {
        let reserved: u64 = draws[g + 1..].iter().sum();
        let avail = order.len() - cursor - reserved as usize;
        let target = threshold * draw as f64;
        let mut take = 0usize;
        let mut acc = 0u64;
        while take < avail && ((take as u64) < draw || (acc as f64) < target) {
            acc += mos[order[cursor + take]];
            take += 1;
        }
        if g == draws.len() - 1 {
            take = order.len() - cursor;
        }
        groups.push(SubStratum {
            stratum: stratum.to_string(),
            label: format!("{stratum}-G{}", g + 1),
            members: order[cursor..cursor + take].to_vec(),
            draw,
            target,
        });
        cursor += take;
    }
    debug_assert!(groups.iter().all(|g| g.members.len() >= g.draw as usize));
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_close_at_the_cumulated_target() {
        // Sorted sizes 40,30,20,10 with target 2*25=50 per group of 2:
        // the first group crosses 50 at {40,30}, the rest is the tail.
        let gs = build_substrata("A", &[10, 40, 20, 30], 25.0, 4, 2).unwrap();
        assert_eq!(gs.len(), 2);
        assert_eq!(gs[0].members, vec![1, 3]);
        assert_eq!(gs[1].members, vec![2, 0]);
        assert_eq!((gs[0].draw, gs[1].draw), (2, 2));
        assert_eq!(gs[0].label, "A-G1");
        assert_eq!(gs[1].label, "A-G2");
    }

    #[test]
    fn remainder_group_takes_the_leftover_draw_and_psus() {
        // 5 = 2+2+1 groups over ten PSUs of size 500 with target 2000:
        // four PSUs reach each full target, the singleton gets the rest.
        let gs = build_substrata("B", &[500; 10], 1000.0, 5, 2).unwrap();
        assert_eq!(gs.len(), 3);
        assert_eq!(gs.iter().map(|g| g.draw).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(gs[0].members.len(), 4);
        assert_eq!(gs[1].members.len(), 4);
        assert_eq!(gs[2].members.len(), 2);
    }

    #[test]
    fn later_groups_always_keep_enough_candidates() {
        // A huge threshold would let greedy grouping swallow everything;
        // the reservation leaves each later group its draw's worth.
        let gs = build_substrata("C", &[9, 8, 7, 6, 5], 1e9, 4, 2).unwrap();
        assert_eq!(gs.len(), 2);
        assert_eq!(gs[0].members.len(), 3);
        assert_eq!(gs[1].members.len(), 2);
        for g in &gs {
            assert!(g.members.len() >= g.draw as usize);
        }
    }

    #[test]
    fn every_psu_lands_in_exactly_one_group() {
        let mos: Vec<u64> = (1..=23).map(|i| (i * 37) % 400 + 1).collect();
        let gs = build_substrata("D", &mos, 120.0, 7, 3).unwrap();
        let mut seen: Vec<usize> = gs.iter().flat_map(|g| g.members.iter().copied()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        let total: u64 = gs.iter().map(|g| g.draw).sum();
        assert_eq!(total, 7);
        // Members are size-ordered within each group.
        for g in &gs {
            assert!(g.members.windows(2).all(|w| mos[w[0]] >= mos[w[1]]));
        }
    }

    #[test]
    fn degenerate_requests_error_or_vanish() {
        assert!(build_substrata("E", &[5, 5], 10.0, 3, 2).is_err());
        assert!(build_substrata("E", &[5, 5], 10.0, 2, 0).is_err());
        assert!(build_substrata("E", &[5, 5], 10.0, 0, 2).unwrap().is_empty());
    }
}
