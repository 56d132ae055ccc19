//! Design-effect algebra for cluster sampling.

use crate::error::{Error, Result};

/// Design effect of single-stage cluster sampling: `1 + rho (b - 1)` for
/// intraclass correlation `rho` and average cluster take `b`.
pub fn deff_simple(rho: f64, b: f64) -> f64 {
    1.0 + rho * (b - 1.0)
}

/// Inverse of [`deff_simple`]: the intraclass correlation implied by an
/// observed design effect at cluster take `b`. Needs `b > 1`.
pub fn rho_from_sample(deff: f64, b: f64) -> Result<f64> {
    if !(b > 1.0) {
        return Err(Error::Invalid(format!(
            "cluster take must exceed 1 to invert a design effect (got {b})"
        )));
    }
    Ok((deff - 1.0) / (b - 1.0))
}

/// Design effect of a stratum split into a self-representing part (SR:
/// every PSU in the sample) and a sampled part (NSR), with part
/// populations, part sample sizes, part intraclass correlations and part
/// cluster takes. Normalised so the population-sum-of-squares weighting
/// collapses to the plain formula in the degenerate cases:
///
/// * `pop_sr = 0` reduces exactly to `deff_simple(rho_nsr, b_nsr)`;
/// * equal halves with equal rho and b reduce to the same;
/// * proportional sample splits make it the population-share-weighted mean
///   of the part effects.
pub fn deff_extended(
    pop_sr: f64,
    pop_nsr: f64,
    n_sr: f64,
    n_nsr: f64,
    rho_sr: f64,
    rho_nsr: f64,
    b_sr: f64,
    b_nsr: f64,
) -> Result<f64> {
    let pop = pop_sr + pop_nsr;
    if !(pop > 0.0) {
        return Err(Error::Invalid("design effect of an empty stratum".into()));
    }
    if pop_sr > 0.0 && !(n_sr > 0.0) {
        return Err(Error::Invalid(
            "self-representing part has population but no sample".into(),
        ));
    }
    if pop_nsr > 0.0 && !(n_nsr > 0.0) {
        return Err(Error::Invalid(
            "sampled part has population but no sample".into(),
        ));
    }
    if pop_sr == 0.0 {
        return Ok(deff_simple(rho_nsr, b_nsr));
    }
    if pop_nsr == 0.0 {
        return Ok(deff_simple(rho_sr, b_sr));
    }
    let n = n_sr + n_nsr;
    let part_sr = pop_sr.powi(2) / n_sr * deff_simple(rho_sr, b_sr);
    let part_nsr = pop_nsr.powi(2) / n_nsr * deff_simple(rho_nsr, b_nsr);
    Ok(n / pop.powi(2) * (part_sr + part_nsr))
}

/// Threshold on the measure of size above which a PSU is self-representing:
/// `minimum * delta / f`, the size at which the PSU's expected workload
/// under sampling fraction `f` reaches the per-PSU interviewing floor.
pub fn compute_threshold(minimum: u64, delta: f64, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Invalid(format!(
            "sampling fraction must be positive (got {f})"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("delta must be positive (got {delta})")));
    }
    Ok(minimum as f64 * delta / f)
}

/// Indices and population masses of a threshold split. A PSU is
/// self-representing when its measure of size strictly exceeds the
/// threshold, so a zero threshold makes everything self-representing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrNsrSplit {
    pub sr: Vec<usize>,
    pub nsr: Vec<usize>,
    pub pop_sr: u64,
    pub pop_nsr: u64,
}

/// Split PSUs by measure of size against a threshold.
pub fn split_sr_nsr(mos: &[u64], threshold: f64) -> SrNsrSplit {
    let mut split = SrNsrSplit {
        sr: Vec::new(),
        nsr: Vec::new(),
        pop_sr: 0,
        pop_nsr: 0,
    };
    for (i, &m) in mos.iter().enumerate() {
        if m as f64 > threshold {
            split.sr.push(i);
            split.pop_sr += m;
        } else {
            split.nsr.push(i);
            split.pop_nsr += m;
        }
    }
    split
}

/// Total, within-cluster and between-cluster deviances of `values` grouped
/// by `clusters` (parallel slices). Compensated summation keeps the
/// decomposition identity tight even on large frames.
pub fn deviance_decomposition<K: Ord + Clone>(
    clusters: &[K],
    values: &[f64],
) -> Result<(f64, f64, f64)> {
    if clusters.len() != values.len() {
        return Err(Error::Invalid("clusters and values differ in length".into()));
    }
    if values.is_empty() {
        return Err(Error::Invalid("no observations".into()));
    }
    let n = values.len() as f64;
    let mean = kahan(values.iter().copied()) / n;

    let mut groups: std::collections::BTreeMap<K, (u64, f64, f64)> = std::collections::BTreeMap::new();
    for (k, &v) in clusters.iter().zip(values) {
        let e = groups.entry(k.clone()).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        // Kahan-compensated running sum per cluster.
        let y = v - e.2;
        let t = e.1 + y;
        e.2 = (t - e.1) - y;
        e.1 = t;
    }

    let d_y = kahan(values.iter().map(|v| (v - mean).powi(2)));
    let mut d_w_terms: Vec<f64> = Vec::with_capacity(values.len());
    {
        let mut group_mean: std::collections::BTreeMap<&K, f64> = std::collections::BTreeMap::new();
        for (k, (cnt, sum, _)) in &groups {
            group_mean.insert(k, sum / *cnt as f64);
        }
        for (k, &v) in clusters.iter().zip(values) {
            d_w_terms.push((v - group_mean[k]).powi(2));
        }
    }
    let d_w = kahan(d_w_terms.into_iter());
    let d_b = kahan(
        groups
            .values()
            .map(|(cnt, sum, _)| *cnt as f64 * (sum / *cnt as f64 - mean).powi(2)),
    );
    Ok((d_y, d_w, d_b))
}

/// Population intraclass correlation from the deviance decomposition:
/// `1 - D_within / D_total`. Errors when all values are identical (no
/// deviance to apportion).
pub fn rho_from_population<K: Ord + Clone>(clusters: &[K], values: &[f64]) -> Result<f64> {
    let (d_y, d_w, _) = deviance_decomposition(clusters, values)?;
    if d_y == 0.0 {
        return Err(Error::Invalid(
            "constant variable: intraclass correlation undefined".into(),
        ));
    }
    Ok(1.0 - d_w / d_y)
}

/// Estimator effect: ratio of the variance of the estimator actually used
/// (e.g. calibrated) to the plain design variance.
pub fn effst_compute(var_est: f64, var_ht: f64) -> Result<f64> {
    if !(var_ht > 0.0) {
        return Err(Error::Invalid(format!(
            "reference variance must be positive (got {var_ht})"
        )));
    }
    if var_est < 0.0 {
        return Err(Error::Invalid(format!(
            "estimator variance must be non-negative (got {var_est})"
        )));
    }
    Ok(var_est / var_ht)
}

fn kahan(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deff_simple_matches_published_value() {
        // rho 0.04875369 at b=50 gives 3.388931 (6-decimal precision).
        let d = deff_simple(0.04875369, 50.0);
        assert!((d - 3.388931).abs() < 5e-6, "{d}");
        // And the inversion recovers the correlation.
        let r = rho_from_sample(3.38893081, 50.0).unwrap();
        assert!((r - 0.04875369).abs() < 1e-8, "{r}");
    }

    #[test]
    fn deff_is_one_without_correlation_or_clustering() {
        assert_eq!(deff_simple(0.0, 37.0), 1.0);
        assert_eq!(deff_simple(0.9, 1.0), 1.0);
    }

    #[test]
    fn deff_roundtrip_over_a_grid() {
        for rho in [0.0, 0.01, 0.3, 0.99] {
            for b in [1.5, 2.0, 10.0, 400.0] {
                let r = rho_from_sample(deff_simple(rho, b), b).unwrap();
                assert!((r - rho).abs() < 1e-12, "rho {rho} b {b} -> {r}");
            }
        }
    }

    #[test]
    fn extended_reduces_to_simple_without_sr_part() {
        let d = deff_extended(0.0, 5000.0, 0.0, 300.0, 1.0, 0.07, 1.0, 40.0).unwrap();
        assert_eq!(d, deff_simple(0.07, 40.0));
    }

    #[test]
    fn extended_with_single_unit_sr_take_adds_nothing() {
        let d = deff_extended(800.0, 0.0, 60.0, 0.0, 1.0, 0.3, 1.0, 25.0).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn extended_symmetric_halves_collapse() {
        let d = deff_extended(500.0, 500.0, 50.0, 50.0, 0.2, 0.2, 12.0, 12.0).unwrap();
        assert!((d - deff_simple(0.2, 12.0)).abs() < 1e-12, "{d}");
    }

    #[test]
    fn extended_proportional_split_is_share_weighted() {
        // 30% SR with no penalty, 70% NSR with deff 2: expect 0.3 + 1.4.
        let d = deff_extended(300.0, 700.0, 30.0, 70.0, 1.0, 0.1, 1.0, 11.0).unwrap();
        assert!((d - (0.3 + 0.7 * 2.0)).abs() < 1e-12, "{d}");
    }

    #[test]
    fn threshold_follows_the_workload_identity() {
        assert_eq!(compute_threshold(50, 1.0, 0.01).unwrap(), 5000.0);
        assert_eq!(compute_threshold(7, 1.0, 1.0).unwrap(), 7.0);
        assert_eq!(compute_threshold(10, 2.5, 0.05).unwrap(), 500.0);
        assert!(compute_threshold(10, 1.0, 0.0).is_err());
    }

    #[test]
    fn split_is_strict_on_the_threshold() {
        let s = split_sr_nsr(&[100, 250, 250, 900], 250.0);
        assert_eq!(s.sr, vec![3]);
        assert_eq!(s.nsr, vec![0, 1, 2]);
        assert_eq!(s.pop_sr, 900);
        assert_eq!(s.pop_nsr, 600);
        // Zero threshold: everything self-representing.
        let s = split_sr_nsr(&[5, 8], 0.0);
        assert_eq!(s.sr.len(), 2);
        assert_eq!(s.pop_nsr, 0);
    }

    #[test]
    fn rho_from_population_hand_checked() {
        // Clusters {0,0}, {0,1}, {1,1}: total deviance 1.5, within 0.5.
        let clusters = vec![1, 1, 2, 2, 3, 3];
        let values = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rho = rho_from_population(&clusters, &values).unwrap();
        assert!((rho - 2.0 / 3.0).abs() < 1e-12, "{rho}");
    }

    #[test]
    fn rho_extremes() {
        // Perfect segregation: within-deviance zero, rho 1.
        let rho = rho_from_population(&[1, 1, 2, 2], &[4.0, 4.0, 9.0, 9.0]).unwrap();
        assert_eq!(rho, 1.0);
        // One cluster: all deviance within, rho 0.
        let rho = rho_from_population(&[1, 1, 1], &[1.0, 2.0, 4.0]).unwrap();
        assert!(rho.abs() < 1e-12);
        // Constant variable: undefined.
        assert!(rho_from_population(&[1, 2], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn deviances_decompose_exactly() {
        use rand::Rng;
        let mut rng = crate::rng::stream(5, "cluster-test", "decomp");
        for _ in 0..50 {
            let n = rng.random_range(10..400);
            let clusters: Vec<u32> = (0..n).map(|_| rng.random_range(0..12)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..20.0)).collect();
            let (d_y, d_w, d_b) = deviance_decomposition(&clusters, &values).unwrap();
            assert!(
                (d_y - d_w - d_b).abs() <= 1e-9 * d_y.abs().max(1.0),
                "{d_y} != {d_w} + {d_b}"
            );
            if d_y > 0.0 {
                let rho = 1.0 - d_w / d_y;
                assert!((-1e-12..=1.0 + 1e-12).contains(&rho), "{rho}");
            }
        }
    }

    #[test]
    fn effst_is_a_plain_ratio_with_guards() {
        assert_eq!(effst_compute(2.0, 4.0).unwrap(), 0.5);
        assert_eq!(effst_compute(4.0, 4.0).unwrap(), 1.0);
        assert!(effst_compute(1.0, 0.0).is_err());
        assert!(effst_compute(-1.0, 2.0).is_err());
    }
}
